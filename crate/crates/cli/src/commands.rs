use cowqkd::attack::run_attack_sim_with_model;
use cowqkd::discrimination::{intermediate_measurement, med_measurement, usd_failure_probability, DiscriminationProblem, MeasurementModel};
use cowqkd::optimize::{bound_sweep, check_experiment, frontier, ExperimentVerdict, Optimum};
use cowqkd::states::ProtocolParams;
use cowqkd::{Estimate, ObservedStats, Sequence};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{num, opt, Table};
use crate::CliError;

/// A command's result in both output shapes.
pub struct Output {
    pub table: Table,
    pub json: Value,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialise")
}

fn value(e: Option<Estimate>) -> String {
    opt(e.map(|e| e.value))
}

fn stderr(e: Option<Estimate>) -> String {
    opt(e.map(|e| e.stderr))
}

const VIS_SE_COLUMNS: [&str; 6] = ["V_d_se", "V_01_se", "V_0d_se", "V_d1_se", "V_dd_se", "V_ave_se"];

fn vis_fields(s: Option<&ObservedStats>, f: fn(Option<Estimate>) -> String) -> Vec<String> {
    let mut out: Vec<String> = Sequence::ALL.iter().map(|q| f(s.and_then(|s| s.vis[*q]))).collect();
    out.push(f(s.and_then(|s| s.v_ave)));
    out
}

fn undefined_list(u: &[Sequence]) -> String {
    u.iter().map(|s| s.label()).collect::<Vec<_>>().join(" ")
}

pub fn simulate(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = cfg.protocol_params()?;
    let a = cfg.attack(&p)?;
    let model = intermediate_measurement(&DiscriminationProblem::from_params(&p)?, a.q_inc)?;
    let s = run_attack_sim_with_model(&p, &model, &a, cfg.sim.n_signals, cfg.sim.seed, cfg.sim.weighting)?;

    let mut t = Table::new(vec!["quantity", "value", "stderr"]);
    let mut row = |name: String, e: Option<Estimate>| t.push(vec![name, value(e), stderr(e)]);
    row("gain_bit".into(), Some(s.gain_bit));
    row("gain_all".into(), Some(s.gain_all));
    row("gain_sifted".into(), Some(s.gain_sifted));
    row("qber".into(), s.qber);
    for q in Sequence::ALL {
        row(format!("p_m1_{}", q.label()), Some(s.p_m1[q]));
        row(format!("p_m2_{}", q.label()), Some(s.p_m2[q]));
        row(format!("V_{}", q.label()), s.vis[q]);
    }
    row("V_ave".into(), s.v_ave);
    t.footer.push(("n_signals".into(), s.n_signals.to_string()));
    for (k, v) in [("q_inc", a.q_inc), ("q_p", a.q_p), ("m_min", a.m_min as f64), ("beta2", a.beta2)] {
        t.footer.push((k.into(), num(v)));
    }
    Ok(Output { table: t, json: json!({ "attack": a, "stats": s }) })
}

fn optimum_fields(o: Option<&Optimum>) -> Vec<String> {
    let s = o.map(|o| &o.stats);
    let mut f = vec![value(s.and_then(|s| s.qber))];
    f.extend(vis_fields(s, value));
    let a = o.map(|o| o.attack);
    f.extend([
        opt(a.map(|a| a.q_inc)),
        opt(a.map(|a| a.q_p)),
        a.map_or_else(String::new, |a| a.m_min.to_string()),
        opt(a.map(|a| a.beta2)),
        opt(s.map(|s| s.gain_bit.value)),
    ]);
    f
}

const OPTIMUM_COLUMNS: [&str; 12] = ["qber", "V_d", "V_01", "V_0d", "V_d1", "V_dd", "V_ave", "q_inc", "q_p", "m_min", "beta2", "achieved_gain"];

pub fn frontier_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    cfg.forbid_attack("frontier")?;
    let p = cfg.protocol_params()?;
    let t = cfg.target()?;
    let gains = cfg.grid(&cfg.sweep.gain_grid, "gain_grid")?;
    for &g in gains {
        if !(g > 0.0 && g <= 1.0) {
            return Err(CliError::Validation(format!("gain_grid entry {g} must lie in (0, 1]")));
        }
    }
    let rows = frontier(&p, gains, &t, cfg.budget(), cfg.sim.seed)?;

    let mut cols = vec!["gain", "status"];
    cols.extend(OPTIMUM_COLUMNS);
    cols.extend(["max_gain", "qber_se"]);
    cols.extend(VIS_SE_COLUMNS);
    cols.extend(["succeeds", "undefined"]);
    let mut table = Table::new(cols);
    for r in &rows {
        let o = r.optimum.as_ref();
        let mut f = vec![num(r.gain), if o.is_some() { "ok" } else { "infeasible" }.to_string()];
        f.extend(optimum_fields(o));
        f.push(opt(r.max_gain));
        f.push(stderr(o.and_then(|o| o.stats.qber)));
        f.extend(vis_fields(o.map(|o| &o.stats), stderr));
        f.push(o.map_or_else(String::new, |o| o.succeeds.to_string()));
        f.push(o.map_or_else(String::new, |o| undefined_list(&o.undefined)));
        table.push(f);
    }
    Ok(Output { table, json: to_json(&rows) })
}

pub fn bound(cfg: &RunConfig) -> Result<Output, CliError> {
    let f = cfg.protocol.f.ok_or_else(|| CliError::Validation("missing field `f` in [protocol]".into()))?;
    if !(f > 0.0 && f <= 1.0) {
        return Err(CliError::Validation(format!("protocol.f = {f} must lie in (0, 1]")));
    }
    let t = cfg.target()?;
    let grid = cfg.grid(&cfg.sweep.eta_grid, "eta_grid")?;
    let sweep = bound_sweep(f, cfg.protocol.t_b, grid, &t, cfg.budget(), cfg.sim.seed)?;

    let mut table = Table::new(vec!["eta", "alpha_max2", "R", "status"]);
    for b in &sweep.points {
        table.push(vec![num(b.eta), num(b.alpha_max2), num(b.r), b.status().to_string()]);
    }
    table.footer.push(("log_log_slope".into(), opt(sweep.log_slope)));
    if let Some(fit) = sweep.alpha_fit {
        table.footer.push(("alpha_max2_vs_eta_slope".into(), num(fit.slope)));
        table.footer.push(("alpha_max2_vs_eta_r_squared".into(), num(fit.r_squared)));
    }
    Ok(Output { table, json: to_json(&sweep) })
}

#[derive(Serialize)]
struct CheckRow {
    label: String,
    #[serde(flatten)]
    outcome: CheckOutcome,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum CheckOutcome {
    Verdict(ExperimentVerdict),
    Error(String),
}

pub fn check(cfg: &RunConfig) -> Result<Output, CliError> {
    let t = cfg.target()?;
    if cfg.experiments.is_empty() {
        return Err(CliError::Validation("no [[experiments]] given".into()));
    }
    // The attack is lossless, so η never enters; intensity and decoy fraction
    // come from each point.
    let base = ProtocolParams { alpha2: 0.0, f: 0.5, t_b: cfg.protocol.t_b, eta: 1.0, delta_t: None };
    let rows: Vec<CheckRow> = cfg
        .experiments
        .par_iter()
        .map(|pt| {
            let outcome = match check_experiment(pt, &base, &t, cfg.budget(), cfg.sim.seed) {
                Ok(v) => CheckOutcome::Verdict(v),
                Err(e) => CheckOutcome::Error(e.to_string()),
            };
            CheckRow { label: pt.label.clone(), outcome }
        })
        .collect();

    let mut cols = vec!["label", "verdict", "error"];
    cols.extend(OPTIMUM_COLUMNS);
    cols.push("max_gain");
    let mut table = Table::new(cols);
    for r in &rows {
        let mut f = vec![r.label.clone()];
        match &r.outcome {
            CheckOutcome::Verdict(v) => {
                let verdict = serde_json::to_value(v.verdict).unwrap();
                f.push(verdict.as_str().unwrap().to_string());
                f.push(String::new());
                let s = v.stats.as_ref();
                f.push(value(s.and_then(|s| s.qber)));
                f.extend(vis_fields(s, value));
                let a = v.attack;
                f.extend([
                    opt(a.map(|a| a.q_inc)),
                    opt(a.map(|a| a.q_p)),
                    a.map_or_else(String::new, |a| a.m_min.to_string()),
                    opt(a.map(|a| a.beta2)),
                    opt(s.map(|s| s.gain_bit.value)),
                    opt(v.max_gain),
                ]);
            }
            CheckOutcome::Error(e) => {
                f.push("error".into());
                f.push(e.clone());
                f.extend(std::iter::repeat_n(String::new(), OPTIMUM_COLUMNS.len() + 1));
            }
        }
        table.push(f);
    }
    Ok(Output { table, json: to_json(&rows) })
}

#[derive(Serialize)]
struct DiscriminationRow {
    q_inc: f64,
    model: MeasurementModel,
}

pub fn discriminate(cfg: &RunConfig) -> Result<Output, CliError> {
    let s = &cfg.protocol;
    let p = ProtocolParams {
        alpha2: s.alpha2.ok_or_else(|| CliError::Validation("missing field `alpha2` in [protocol]".into()))?,
        f: s.f.ok_or_else(|| CliError::Validation("missing field `f` in [protocol]".into()))?,
        t_b: s.t_b,
        eta: s.eta.unwrap_or(1.0),
        delta_t: None,
    };
    p.validate()?;
    let prob = DiscriminationProblem::from_params(&p)?;
    let q_usd = usd_failure_probability(&prob)?;
    let med = med_measurement(&prob)?;
    let grid: Vec<f64> = match &cfg.sweep.q_inc_grid {
        Some(g) => {
            if g.is_empty() {
                return Err(CliError::Validation("sweep.q_inc_grid is empty".into()));
            }
            g.clone()
        }
        None => (0..=10).map(|k| q_usd * k as f64 / 10.0).collect(),
    };
    let rows = grid
        .iter()
        .map(|&q| Ok(DiscriminationRow { q_inc: q, model: intermediate_measurement(&prob, q)? }))
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut table = Table::new(vec!["q_inc", "avg_error", "conclusive_0", "conclusive_1", "conclusive_d"]);
    for r in &rows {
        let c = r.model.conclusive_prob;
        table.push(vec![num(r.q_inc), num(r.model.avg_error), num(c[0]), num(c[1]), num(c[2])]);
    }
    table.footer.push(("q_usd".into(), num(q_usd)));
    table.footer.push(("med_error".into(), num(med.avg_error)));
    Ok(Output { table, json: json!({ "q_usd": q_usd, "med": med, "models": rows }) })
}
