//! Attack optimisation at a fixed gain, the largest intensity at which the
//! optimised attack still fails, and the resulting key-rate bound.
//!
//! Every candidate measurement (one `q_inc`) gets its own
//! [`RenewalEstimator`]; `m_min` and `q_p` are then scanned on a grid and
//! `|β|²` is solved for the target gain, which is monotone in it. Candidates
//! are ranked by a total order, so parallel evaluation cannot change the
//! selected attack.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackParams, RenewalConfig, RenewalEstimator};
use crate::discrimination::{intermediate_measurement, usd_failure_probability, DiscriminationProblem, MeasurementModel};
use crate::states::ProtocolParams;
use crate::{Error, ObservedStats, Result, Sequence, VisibilityWeighting};

/// Relative tolerance on the matched gain.
pub const GAIN_RTOL: f64 = 0.01;
/// Largest resend intensity considered.
pub const BETA2_MAX: f64 = 50.0;
/// Largest `m_min` on the grid; `m_min = 1` means no cutoff.
pub const M_MIN_MAX: u32 = 8;
/// Smallest intensity `alpha_max` looks at.
pub const ALPHA2_FLOOR: f64 = 1e-6;
/// Upper end of the `alpha_max` bracket search.
pub const ALPHA2_CEIL: f64 = 50.0;
const ALPHA2_RTOL: f64 = 1e-2;
const Q_P_GRID: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximise `min_s V_s`.
    #[default]
    MaxMinVisibility,
    /// Maximise `V_ave`.
    MaxAverageVisibility,
}

/// What Eve optimises and the thresholds Alice and Bob test against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationTarget {
    #[serde(default)]
    pub objective: Objective,
    pub q_th: f64,
    pub v_th: f64,
}

impl OptimizationTarget {
    pub fn new(objective: Objective, q_th: f64, v_th: f64) -> Result<Self> {
        let t = OptimizationTarget { objective, q_th, v_th };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.q_th) {
            return Err(Error::param("q_th", self.q_th, "must lie in [0, 0.5]"));
        }
        if !(0.0..=1.0).contains(&self.v_th) {
            return Err(Error::param("v_th", self.v_th, "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn objective_value(&self, s: &ObservedStats) -> f64 {
        // Undefined visibilities do not count against Eve.
        match self.objective {
            Objective::MaxMinVisibility => s.min_visibility().unwrap_or(1.0),
            Objective::MaxAverageVisibility => s.v_ave.map_or(1.0, |e| e.value),
        }
    }
}

/// Outcome of [`attack_succeeds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessCheck {
    pub succeeds: bool,
    /// Sequences whose visibility was undefined and therefore not tested.
    pub undefined: Vec<Sequence>,
}

/// Whether the attack stays within the thresholds.
///
/// An undefined visibility means Bob never saw a monitoring click on that
/// sequence; it is reported in `undefined` and does not fail the test on its
/// own. An undefined QBER, or no defined visibility at all, fails it.
pub fn attack_succeeds(stats: &ObservedStats, t: &OptimizationTarget) -> SuccessCheck {
    let undefined = stats.undefined_sequences();
    let qber_ok = stats.qber.is_some_and(|q| q.value <= t.q_th);
    let vis_ok = match t.objective {
        Objective::MaxMinVisibility => stats.min_visibility().is_some_and(|v| v >= t.v_th),
        Objective::MaxAverageVisibility => stats.v_ave.is_some_and(|v| v.value >= t.v_th),
    };
    SuccessCheck { succeeds: qber_ok && vis_ok, undefined }
}

/// Search effort. Level `b` scans `4b + 1` values of `q_inc` and refines the
/// best one with `2b + 2` golden-section steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget(pub u32);

impl Default for Budget {
    fn default() -> Self {
        Budget(2)
    }
}

impl Budget {
    fn validate(self) -> Result<()> {
        if self.0 < 1 {
            return Err(Error::param("budget", self.0 as f64, "must be >= 1"));
        }
        Ok(())
    }

    fn grid_points(self) -> usize {
        4 * self.0 as usize + 1
    }

    fn refine_steps(self) -> usize {
        2 * self.0 as usize + 2
    }
}

/// The selected attack at one gain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub attack: AttackParams,
    pub stats: ObservedStats,
    /// Whether it passes the target's thresholds.
    pub succeeds: bool,
    pub undefined: Vec<Sequence>,
}

/// Ranking key; larger is better.
#[derive(Debug, Clone, Copy)]
struct Rank {
    passes: bool,
    objective: f64,
    qber: f64,
    attack: AttackParams,
}

impl Rank {
    fn cmp(&self, o: &Rank) -> Ordering {
        self.passes
            .cmp(&o.passes)
            .then(self.objective.total_cmp(&o.objective))
            .then(o.qber.total_cmp(&self.qber))
            // Deterministic tie-break: prefer the simpler attack.
            .then(o.attack.q_inc.total_cmp(&self.attack.q_inc))
            .then(o.attack.m_min.cmp(&self.attack.m_min))
            .then(o.attack.q_p.total_cmp(&self.attack.q_p))
    }
}

struct Candidate {
    rank: Rank,
    stats: ObservedStats,
}

/// Best attack for one measurement, or the largest gain it reaches.
type Scan = std::result::Result<Candidate, f64>;

fn better(a: Scan, b: Scan) -> Scan {
    match (a, b) {
        (Ok(x), Ok(y)) => Ok(if y.rank.cmp(&x.rank) == Ordering::Greater { y } else { x }),
        (Ok(x), Err(_)) | (Err(_), Ok(x)) => Ok(x),
        (Err(g), Err(h)) => Err(g.max(h)),
    }
}

/// Solve `gain(β²) = target` on `[0, BETA2_MAX]`; the gain is increasing.
fn match_beta2(gain: impl Fn(f64) -> Result<f64>, target: f64) -> Result<std::result::Result<f64, f64>> {
    let g_max = gain(BETA2_MAX)?;
    if g_max < target * (1.0 - GAIN_RTOL) {
        return Ok(Err(g_max));
    }
    if g_max <= target {
        return Ok(Ok(BETA2_MAX));
    }
    let (mut lo, mut hi) = (0.0, BETA2_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gain(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(Ok(hi))
}

struct Scanner<'a, F: Fn(&ObservedStats) -> bool + Sync> {
    p: &'a ProtocolParams,
    target_gain: f64,
    t: &'a OptimizationTarget,
    passes: F,
    weighting: VisibilityWeighting,
    seed: u64,
}

impl<F: Fn(&ObservedStats) -> bool + Sync> Scanner<'_, F> {
    fn scan_model(&self, model: &MeasurementModel, m_mins: &[u32], q_ps: &[f64]) -> Result<Scan> {
        let m_max = m_mins.iter().copied().max().unwrap_or(1);
        // Same seed for every candidate: common random numbers.
        let est = RenewalEstimator::new(self.p, model, m_max, RenewalConfig::default(), self.weighting, self.seed)?;
        let mut best: Scan = Err(0.0);
        for &m_min in m_mins {
            for &q_p in q_ps {
                let base = AttackParams { q_inc: model.q_inc, q_p, m_min, beta2: 0.0 };
                let matched = match_beta2(|beta2| est.gain_bit(&AttackParams { beta2, ..base }), self.target_gain)?;
                let cand = match matched {
                    Err(g) => Err(g),
                    Ok(beta2) => {
                        let attack = AttackParams { beta2, ..base };
                        let stats = est.evaluate(&attack)?;
                        let rank = Rank {
                            passes: (self.passes)(&stats),
                            objective: self.t.objective_value(&stats),
                            qber: stats.qber.map_or(f64::INFINITY, |q| q.value),
                            attack,
                        };
                        Ok(Candidate { rank, stats })
                    }
                };
                best = better(best, cand);
            }
        }
        Ok(best)
    }

    pub(crate) fn scan(&self, prob: &DiscriminationProblem, q_inc: f64) -> Result<Scan> {
        let model = intermediate_measurement(prob, q_inc)?;
        let q_ps: Vec<f64> = (0..Q_P_GRID).map(|k| k as f64 / (Q_P_GRID - 1) as f64).collect();
        let m_mins: Vec<u32> = (1..=M_MIN_MAX).collect();
        self.scan_model(&model, &m_mins, &q_ps)
    }

    fn run(&self, budget: Budget) -> Result<Candidate> {
        let prob = DiscriminationProblem::from_params(self.p)?;
        let q_usd = usd_failure_probability(&prob)?;
        let n = budget.grid_points();
        let grid: Vec<f64> = (0..n).map(|k| q_usd * k as f64 / (n - 1) as f64).collect();
        let scans = grid.par_iter().map(|&q| self.scan(&prob, q)).collect::<Result<Vec<_>>>()?;

        let max_gain = |s: &[Scan]| s.iter().filter_map(|x| x.as_ref().err().copied()).fold(0.0, f64::max);
        let best_idx = scans
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().ok().map(|c| (i, c.rank)))
            .max_by(|(_, a), (_, b)| a.cmp(b))
            .map(|(i, _)| i);
        let Some(k) = best_idx else {
            return Err(Error::InfeasibleGain { target: self.target_gain, max_gain: max_gain(&scans) });
        };

        // Golden-section refinement of q_inc around the best grid point.
        let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(n - 1)]);
        let mut best: Scan = Ok(scans.into_iter().nth(k).unwrap().unwrap());
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        for _ in 0..budget.refine_steps() {
            if b - a <= 1e-9 {
                break;
            }
            let (x1, x2) = (b - INV_PHI * (b - a), a + INV_PHI * (b - a));
            let (s1, s2) = rayon::join(|| self.scan(&prob, x1), || self.scan(&prob, x2));
            let (s1, s2) = (s1?, s2?);
            let r = |s: &Scan| s.as_ref().ok().map(|c| c.rank);
            let left_wins = match (r(&s1), r(&s2)) {
                (Some(u), Some(v)) => u.cmp(&v) != Ordering::Less,
                (Some(_), None) => true,
                _ => false,
            };
            if left_wins {
                b = x2;
            } else {
                a = x1;
            }
            best = better(better(best, s1), s2);
        }
        Ok(best.unwrap_or_else(|_| unreachable!("a feasible candidate was already found")))
    }
}

/// Best sequential attack whose per-bit-signal gain matches `target_gain`.
///
/// Ranking: passing the thresholds first, then the objective, then lower
/// QBER. Fails with [`Error::InfeasibleGain`] when no attack reaches the gain.
pub fn optimize_attack_at_gain(
    p: &ProtocolParams,
    target_gain: f64,
    t: &OptimizationTarget,
    budget: Budget,
    seed: u64,
) -> Result<Optimum> {
    p.validate()?;
    t.validate()?;
    budget.validate()?;
    if !(target_gain > 0.0 && target_gain <= 1.0) {
        return Err(Error::param("target_gain", target_gain, "must lie in (0, 1]"));
    }
    let scanner = Scanner {
        p,
        target_gain,
        t,
        passes: |s: &ObservedStats| attack_succeeds(s, t).succeeds,
        weighting: VisibilityWeighting::Occurrence,
        seed,
    };
    let c = scanner.run(budget)?;
    let check = attack_succeeds(&c.stats, t);
    Ok(Optimum {
        attack: c.rank.attack,
        stats: c.stats,
        succeeds: check.succeeds,
        undefined: check.undefined,
    })
}

/// One row of an optimised frontier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub gain: f64,
    /// `None` when the gain is out of the attack's reach.
    pub optimum: Option<Optimum>,
    pub max_gain: Option<f64>,
}

/// Optimised attack over a list of target gains. The same seed is used at
/// every gain so that neighbouring rows share their random numbers.
pub fn frontier(p: &ProtocolParams, gains: &[f64], t: &OptimizationTarget, budget: Budget, seed: u64) -> Result<Vec<FrontierRow>> {
    if gains.is_empty() {
        return Err(Error::param("gain_grid", 0.0, "must not be empty"));
    }
    gains
        .par_iter()
        .map(|&gain| match optimize_attack_at_gain(p, gain, t, budget, seed) {
            Ok(o) => Ok(FrontierRow { gain, optimum: Some(o), max_gain: None }),
            Err(Error::InfeasibleGain { max_gain, .. }) => Ok(FrontierRow { gain, optimum: None, max_gain: Some(max_gain) }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Gain of the strongest attack: minimum-error measurement, no cutoff, no
/// trimming, largest resend intensity.
pub fn attack_max_gain(p: &ProtocolParams, seed: u64) -> Result<f64> {
    let prob = DiscriminationProblem::from_params(p)?;
    let model = intermediate_measurement(&prob, 0.0)?;
    let est = RenewalEstimator::new(p, &model, 1, RenewalConfig::default(), VisibilityWeighting::Occurrence, seed)?;
    est.gain_bit(&AttackParams { q_inc: 0.0, q_p: 0.0, m_min: 1, beta2: BETA2_MAX })
}

/// Perfect-USD attack with full trimming, if it reaches the gain.
fn perfect_usd_attack(p: &ProtocolParams, target_gain: f64, t: &OptimizationTarget, seed: u64) -> Result<Option<Candidate>> {
    let prob = DiscriminationProblem::from_params(p)?;
    let model = intermediate_measurement(&prob, usd_failure_probability(&prob)?)?;
    let scanner = Scanner {
        p,
        target_gain,
        t,
        passes: |s: &ObservedStats| attack_succeeds(s, t).succeeds,
        weighting: VisibilityWeighting::Occurrence,
        seed,
    };
    let m_mins: Vec<u32> = (1..=M_MIN_MAX).collect();
    Ok(scanner.scan_model(&model, &m_mins, &[1.0])?.ok())
}

/// Result of [`alpha_max`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaMax {
    pub alpha_max2: f64,
    /// The attack succeeds even at the smallest intensity considered.
    pub no_secure_intensity: bool,
    /// The attack fails at every intensity up to the bracket ceiling.
    pub ceiling_reached: bool,
    /// The attack was confirmed to succeed at 1.1 times the result.
    pub verified_above: bool,
}

/// Whether the optimised attack succeeds against an honest channel at `alpha2`.
fn succeeds_at(base: &ProtocolParams, alpha2: f64, t: &OptimizationTarget, budget: Budget, seed: u64) -> Result<bool> {
    let p = base.with_alpha2(alpha2);
    let target = p.honest_bit_gain();
    let seed = crate::attack::derive_seed(seed, alpha2.to_bits());
    // Cheap first try: the zero-error, fully trimmed attack.
    if let Some(c) = perfect_usd_attack(&p, target, t, seed)? {
        if c.rank.passes {
            return Ok(true);
        }
    }
    match optimize_attack_at_gain(&p, target, t, budget, seed) {
        Ok(o) => Ok(o.succeeds),
        Err(Error::InfeasibleGain { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Largest `|α|²` at which the optimised attack fails, to 1% relative.
pub fn alpha_max(f: f64, eta: f64, t_b: f64, t: &OptimizationTarget, budget: Budget, seed: u64) -> Result<AlphaMax> {
    let base = ProtocolParams::new(ALPHA2_FLOOR, f, t_b, eta)?;
    t.validate()?;
    budget.validate()?;
    let succeeds = |a: f64| succeeds_at(&base, a, t, budget, seed);

    if succeeds(ALPHA2_FLOOR)? {
        return Ok(AlphaMax { alpha_max2: 0.0, no_secure_intensity: true, ceiling_reached: false, verified_above: false });
    }
    let (mut lo, mut hi) = (ALPHA2_FLOOR, ALPHA2_FLOOR);
    loop {
        hi = (hi * 4.0).min(ALPHA2_CEIL);
        if succeeds(hi)? {
            break;
        }
        lo = hi;
        if hi >= ALPHA2_CEIL {
            return Ok(AlphaMax { alpha_max2: lo, no_secure_intensity: false, ceiling_reached: true, verified_above: false });
        }
    }
    while hi / lo > 1.0 + ALPHA2_RTOL {
        let mid = (lo * hi).sqrt();
        if succeeds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let verified_above = succeeds(1.1 * lo)?;
    Ok(AlphaMax { alpha_max2: lo, no_secure_intensity: false, ceiling_reached: false, verified_above })
}

/// One point of the key-rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    pub eta: f64,
    pub f: f64,
    pub alpha_max2: f64,
    /// `(1 - f) η |α_max|²`.
    pub r: f64,
    pub no_secure_intensity: bool,
    pub ceiling_reached: bool,
    pub verified_above: bool,
}

impl BoundPoint {
    pub fn status(&self) -> &'static str {
        if self.f >= 1.0 {
            "no_bit_signals"
        } else if self.no_secure_intensity {
            "no_secure_intensity"
        } else if self.ceiling_reached {
            "ceiling_reached"
        } else if !self.verified_above {
            "unverified"
        } else {
            "ok"
        }
    }
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSweep {
    pub points: Vec<BoundPoint>,
    /// Slope of `log R` against `log η`, when every `R` is positive.
    pub log_slope: Option<f64>,
    /// Line through `|α_max|²` against `η`.
    pub alpha_fit: Option<LinearFit>,
}

/// Key-rate bound `R(η)` over a strictly decreasing `η` grid.
pub fn bound_sweep(f: f64, t_b: f64, eta_grid: &[f64], t: &OptimizationTarget, budget: Budget, seed: u64) -> Result<BoundSweep> {
    if eta_grid.is_empty() {
        return Err(Error::param("eta_grid", 0.0, "must not be empty"));
    }
    for w in eta_grid.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::param("eta_grid", w[1], "must be strictly decreasing"));
        }
    }
    for &eta in eta_grid {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param("eta", eta, "must lie in (0, 1]"));
        }
    }
    let points = eta_grid
        .par_iter()
        .map(|&eta| {
            if f == 1.0 {
                return Ok(BoundPoint { eta, f, alpha_max2: 0.0, r: 0.0, no_secure_intensity: false, ceiling_reached: false, verified_above: false });
            }
            let am = alpha_max(f, eta, t_b, t, budget, crate::attack::derive_seed(seed, eta.to_bits()))?;
            Ok(BoundPoint {
                eta,
                f,
                alpha_max2: am.alpha_max2,
                r: (1.0 - f) * eta * am.alpha_max2,
                no_secure_intensity: am.no_secure_intensity,
                ceiling_reached: am.ceiling_reached,
                verified_above: am.verified_above,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_slope = if points.iter().all(|b| b.r > 0.0) {
        let lx: Vec<f64> = points.iter().map(|b| b.eta.ln()).collect();
        let ly: Vec<f64> = points.iter().map(|b| b.r.ln()).collect();
        linear_fit(&lx, &ly).map(|l| l.slope)
    } else {
        None
    };
    let x: Vec<f64> = points.iter().map(|b| b.eta).collect();
    let y: Vec<f64> = points.iter().map(|b| b.alpha_max2).collect();
    Ok(BoundSweep { points, log_slope, alpha_fit: linear_fit(&x, &y) })
}

/// Measured operating point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPoint {
    pub label: String,
    /// Data-line click probability per bit signal.
    pub gain: Option<f64>,
    pub qber: Option<f64>,
    /// Per-sequence visibilities keyed by `d`, `01`, `0d`, `d1`, `dd`.
    #[serde(default)]
    pub visibilities: Option<BTreeMap<String, f64>>,
    pub v_ave: Option<f64>,
    pub alpha2: Option<f64>,
    pub f: Option<f64>,
}

/// Validated measured values.
struct Measured {
    gain: f64,
    qber: f64,
    vis: Vec<(Sequence, f64)>,
    v_ave: Option<f64>,
    alpha2: f64,
    f: f64,
}

impl ExperimentPoint {
    fn measured(&self) -> Result<Measured> {
        let mut missing = Vec::new();
        for (name, v) in [("gain", self.gain), ("qber", self.qber), ("alpha2", self.alpha2), ("f", self.f)] {
            if v.is_none() {
                missing.push(name);
            }
        }
        if self.visibilities.is_none() && self.v_ave.is_none() {
            missing.push("visibilities or v_ave");
        }
        if !missing.is_empty() {
            return Err(Error::MissingObservables { label: self.label.clone(), missing });
        }
        let (gain, qber) = (self.gain.unwrap(), self.qber.unwrap());
        if !(gain > 0.0 && gain <= 1.0) {
            return Err(Error::param("gain", gain, "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&qber) {
            return Err(Error::param("qber", qber, "must lie in [0, 1]"));
        }
        let mut vis = Vec::new();
        for (k, &v) in self.visibilities.iter().flatten() {
            let s = Sequence::from_label(k).ok_or_else(|| Error::UnknownSequence(k.clone()))?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::param("visibility", v, "must lie in [-1, 1]"));
            }
            vis.push((s, v));
        }
        if let Some(v) = self.v_ave {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::param("v_ave", v, "must lie in [-1, 1]"));
            }
        }
        Ok(Measured { gain, qber, vis, v_ave: self.v_ave, alpha2: self.alpha2.unwrap(), f: self.f.unwrap() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Insecure,
    NotDecidedByThisAttack,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentVerdict {
    pub label: String,
    pub verdict: Verdict,
    /// The attack closest to dominating the point, if the gain is reachable.
    pub attack: Option<AttackParams>,
    pub stats: Option<ObservedStats>,
    /// Largest reachable gain when the point's gain is not.
    pub max_gain: Option<f64>,
}

fn dominates(s: &ObservedStats, m: &Measured) -> bool {
    let qber_ok = s.qber.is_some_and(|q| q.value <= m.qber);
    let vis_ok = m.vis.iter().all(|(seq, v)| s.vis[*seq].is_none_or(|a| a.value >= *v));
    let ave_ok = m.v_ave.is_none_or(|v| s.v_ave.is_none_or(|a| a.value >= v));
    qber_ok && vis_ok && ave_ok
}

/// Whether the sequential attack reproduces an experiment's gain with QBER no
/// higher and visibilities no lower than measured. `p` supplies `t_B` and
/// `η`; intensity and decoy fraction come from the point.
pub fn check_experiment(
    point: &ExperimentPoint,
    p: &ProtocolParams,
    t: &OptimizationTarget,
    budget: Budget,
    seed: u64,
) -> Result<ExperimentVerdict> {
    let m = point.measured()?;
    let p = ProtocolParams { alpha2: m.alpha2, f: m.f, ..*p };
    p.validate()?;
    t.validate()?;
    budget.validate()?;
    let scanner = Scanner {
        p: &p,
        target_gain: m.gain,
        t,
        passes: |s: &ObservedStats| dominates(s, &m),
        weighting: VisibilityWeighting::Occurrence,
        seed,
    };
    match scanner.run(budget) {
        Ok(c) => Ok(ExperimentVerdict {
            label: point.label.clone(),
            verdict: if c.rank.passes { Verdict::Insecure } else { Verdict::NotDecidedByThisAttack },
            attack: Some(c.rank.attack),
            stats: Some(c.stats),
            max_gain: None,
        }),
        Err(Error::InfeasibleGain { max_gain, .. }) => Ok(ExperimentVerdict {
            label: point.label.clone(),
            verdict: Verdict::NotDecidedByThisAttack,
            attack: None,
            stats: None,
            max_gain: Some(max_gain),
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Estimate, PerSequence};

    fn stats(qber: f64, vis: [f64; 5]) -> ObservedStats {
        let e = Estimate::exact;
        ObservedStats {
            gain_bit: e(0.1),
            gain_all: e(0.1),
            gain_sifted: e(0.1),
            qber: Some(e(qber)),
            p_m1: PerSequence([e(0.1); 5]),
            p_m2: PerSequence([e(0.0); 5]),
            vis: PerSequence(vis.map(|v| Some(e(v)))),
            v_ave: Some(e(vis.iter().sum::<f64>() / 5.0)),
            n_signals: 1,
        }
    }

    fn target(q_th: f64, v_th: f64) -> OptimizationTarget {
        OptimizationTarget::new(Objective::MaxMinVisibility, q_th, v_th).unwrap()
    }

    #[test]
    fn success_thresholds() {
        assert!(attack_succeeds(&stats(0.0, [1.0; 5]), &target(0.0, 1.0)).succeeds);
        assert!(!attack_succeeds(&stats(0.06, [1.0; 5]), &target(0.05, 0.95)).succeeds);
        assert!(!attack_succeeds(&stats(0.0, [1.0, 0.94, 1.0, 1.0, 1.0]), &target(0.05, 0.95)).succeeds);
        let avg = OptimizationTarget::new(Objective::MaxAverageVisibility, 0.05, 0.95).unwrap();
        assert!(attack_succeeds(&stats(0.0, [1.0, 0.94, 1.0, 1.0, 1.0]), &avg).succeeds);
    }

    #[test]
    fn undefined_visibility_is_flagged() {
        let mut s = stats(0.0, [1.0; 5]);
        s.vis.0[0] = None;
        let c = attack_succeeds(&s, &target(0.0, 1.0));
        assert!(c.succeeds);
        assert_eq!(c.undefined, vec![Sequence::D]);
        s.vis = PerSequence([None; 5]);
        assert!(!attack_succeeds(&s, &target(0.0, 1.0)).succeeds);
        s.qber = None;
        assert!(!attack_succeeds(&s, &target(0.5, 0.0)).succeeds);
    }

    #[test]
    fn target_validation() {
        assert!(OptimizationTarget::new(Objective::MaxMinVisibility, 0.6, 0.9).is_err());
        assert!(OptimizationTarget::new(Objective::MaxMinVisibility, 0.1, 1.1).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0];
        let l = linear_fit(&x, &x.map(|v| 2.0 * v + 1.0)).unwrap();
        assert!((l.slope - 2.0).abs() < 1e-14 && (l.intercept - 1.0).abs() < 1e-14);
        assert!((l.r_squared - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn beta_matching() {
        let g = |b: f64| Ok(0.5 * -(-b).exp_m1());
        let b = match_beta2(g, 0.25).unwrap().unwrap();
        assert!((b - 2f64.ln()).abs() < 1e-10);
        assert_eq!(match_beta2(g, 0.6).unwrap(), Err(0.5));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let t = target(0.0, 1.0);
        assert!(bound_sweep(0.155, 0.5, &[], &t, Budget(1), 0).is_err());
        assert!(bound_sweep(0.155, 0.5, &[1e-3, 1e-2], &t, Budget(1), 0).is_err());
        let s = bound_sweep(1.0, 0.5, &[1e-2, 1e-3], &t, Budget(1), 0).unwrap();
        assert!(s.points.iter().all(|b| b.r == 0.0 && b.status() == "no_bit_signals"));
        assert!(s.log_slope.is_none());
    }

    #[test]
    fn missing_observables_are_listed() {
        let pt = ExperimentPoint { label: "x".into(), gain: Some(0.01), qber: None, visibilities: None, v_ave: None, alpha2: Some(0.5), f: None };
        match pt.measured() {
            Err(Error::MissingObservables { missing, .. }) => assert_eq!(missing, vec!["qber", "f", "visibilities or v_ave"]),
            other => panic!("{:?}", other.err()),
        }
    }
}
