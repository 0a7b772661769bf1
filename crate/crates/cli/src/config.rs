//! Run configuration: one TOML file, parsed strictly.

use std::path::{Path, PathBuf};

use cowqkd::attack::AttackParams;
use cowqkd::discrimination::{usd_failure_probability, DiscriminationProblem};
use cowqkd::optimize::{Budget, ExperimentPoint, OptimizationTarget};
use cowqkd::states::ProtocolParams;
use cowqkd::VisibilityWeighting;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_t_b() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(default = "default_t_b")]
    pub t_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
}

/// `q_inc` as a number or the keyword `"usd"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QInc {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub q_inc: QInc,
    pub q_p: f64,
    pub m_min: u32,
    pub beta2: f64,
}

fn default_n_signals() -> usize {
    200_000
}

fn default_replicas() -> usize {
    1
}

fn default_budget() -> u32 {
    Budget::default().0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_n_signals")]
    pub n_signals: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads. Results do not depend on it.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default)]
    pub weighting: VisibilityWeighting,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n_signals: default_n_signals(),
            seed: 0,
            replicas: default_replicas(),
            budget: default_budget(),
            weighting: VisibilityWeighting::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_inc_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_directory() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: default_directory(), format: Format::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<OptimizationTarget>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<ExperimentPoint>,
    #[serde(default)]
    pub output: OutputSection,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn require<T: Copy>(v: Option<T>, section: &str, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| invalid(format!("missing field `{name}` in [{section}]")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    /// Checks shared by every command.
    pub fn validate_common(&self) -> Result<(), CliError> {
        if let Some(t) = &self.target {
            t.validate()?;
        }
        if self.sim.replicas < 1 {
            return Err(invalid("sim.replicas must be >= 1"));
        }
        if self.sim.budget < 1 {
            return Err(invalid("sim.budget must be >= 1"));
        }
        if self.sim.n_signals < 1 {
            return Err(invalid("sim.n_signals must be >= 1"));
        }
        if !(self.protocol.t_b > 0.0 && self.protocol.t_b < 1.0) {
            return Err(invalid(format!("protocol.t_b = {} must lie in (0, 1)", self.protocol.t_b)));
        }
        Ok(())
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams, CliError> {
        let s = &self.protocol;
        let p = ProtocolParams {
            alpha2: require(s.alpha2, "protocol", "alpha2")?,
            f: require(s.f, "protocol", "f")?,
            t_b: s.t_b,
            eta: require(s.eta, "protocol", "eta")?,
            delta_t: s.delta_t,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn target(&self) -> Result<OptimizationTarget, CliError> {
        self.target.ok_or_else(|| invalid("missing [target] section"))
    }

    pub fn budget(&self) -> Budget {
        Budget(self.sim.budget)
    }

    /// Resolved attack; `q_inc = "usd"` becomes the optimal unambiguous rate.
    pub fn attack(&self, p: &ProtocolParams) -> Result<AttackParams, CliError> {
        let a = self.attack.as_ref().ok_or_else(|| invalid("missing [attack] section"))?;
        let q_inc = match &a.q_inc {
            QInc::Value(v) => *v,
            QInc::Keyword(k) if k == "usd" => usd_failure_probability(&DiscriminationProblem::from_params(p)?)?,
            QInc::Keyword(k) => return Err(invalid(format!("attack.q_inc = \"{k}\": expected a number or \"usd\""))),
        };
        let attack = AttackParams { q_inc, q_p: a.q_p, m_min: a.m_min, beta2: a.beta2 };
        attack.validate()?;
        Ok(attack)
    }

    pub fn forbid_attack(&self, command: &str) -> Result<(), CliError> {
        if self.attack.is_some() {
            return Err(invalid(format!("`{command}` optimises the attack; remove the [attack] section")));
        }
        Ok(())
    }

    pub fn grid<'a>(&self, grid: &'a Option<Vec<f64>>, name: &str) -> Result<&'a [f64], CliError> {
        match grid {
            None => Err(invalid(format!("missing sweep.{name}"))),
            Some(g) if g.is_empty() => Err(invalid(format!("sweep.{name} is empty"))),
            Some(g) => Ok(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[protocol]
alpha2 = 0.5
f = 0.155
eta = 0.1
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.protocol.t_b, 0.5);
        assert_eq!(c.sim, SimSection::default());
        assert_eq!(c.output.format, Format::Csv);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse(&format!("{BASE}\nbogus = 1\n")).unwrap_err();
        assert!(matches!(e, CliError::Validation(_)));
        assert!(RunConfig::parse(&format!("{BASE}\n[sim]\nseeds = 3\n")).is_err());
    }

    #[test]
    fn missing_beta2_is_named() {
        let text = format!("{BASE}\n[attack]\nq_inc = 0.1\nq_p = 1.0\nm_min = 1\n");
        match RunConfig::parse(&text) {
            Err(CliError::Validation(msg)) => assert!(msg.contains("beta2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usd_keyword_resolves() {
        let text = format!("{BASE}\n[attack]\nq_inc = \"usd\"\nq_p = 1.0\nm_min = 1\nbeta2 = 1.0\n");
        let c = RunConfig::parse(&text).unwrap();
        let p = c.protocol_params().unwrap();
        let a = c.attack(&p).unwrap();
        assert!((a.q_inc - 0.667518).abs() < 1e-5);
        let bad = text.replace("\"usd\"", "\"med\"");
        assert!(RunConfig::parse(&bad).unwrap().attack(&p).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::parse(BASE).unwrap();
        let again = RunConfig::parse(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
