//! Run-length conditioned estimator of the attack statistics.
//!
//! Conclusive outcomes are i.i.d. with probability `c̄ = 1 - q_inc`, so runs
//! of exactly `l` conclusive signals start at a given position with
//! probability `(1-c̄)² c̄^l`. Every click Bob sees comes from exactly one run
//! (plus its two inconclusive neighbours), so any per-signal rate is
//!
//! ```text
//! Σ_l (1-c̄)² c̄^l E[R | L = l]
//! ```
//!
//! with `R` the contribution of one run. `E[R | L = l]` is computed exactly
//! by enumeration when the run has few possible contents, and by sampling
//! otherwise. Beyond `L` the per-run contribution is affine in `l`, fitted
//! from the `L` and `2L` strata.
//!
//! The per-run contributions are stored as counts of Eve pulse patterns,
//! which do not depend on `|β|²`, `q_p` or `m_min`. Evaluating a new attack
//! is therefore a handful of multiply-adds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tally::{finish, Accumulator};
use super::train::kept_range;
use super::AttackParams;
use crate::discrimination::MeasurementModel;
use crate::states::{ProtocolParams, SignalKind};
use crate::stats::{ObservedStats, Sequence, VisibilityWeighting};
use crate::{Error, Result};

/// Sampling effort of a [`RenewalEstimator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalConfig {
    /// Largest explicitly represented run length `L` (at least 2).
    pub max_len: usize,
    /// Sampled runs per stratum when enumeration is too large.
    pub samples_per_stratum: usize,
    pub batches: usize,
    /// Enumerate a stratum exactly when it has at most this many contents.
    pub enumerate_limit: usize,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig {
            max_len: 64,
            samples_per_stratum: 512,
            batches: 16,
            enumerate_limit: 4096,
        }
    }
}

/// Strata whose weight relative to a single conclusive signal falls below
/// this are dropped.
const NEGLIGIBLE: f64 = 1e-24;

/// Eve's pulse pattern on one signal: none, early only, late only, both.
const PATTERNS: usize = 4;
const ONE: usize = 0;
const COHERENT: usize = 1;

fn pattern_index(early: bool, late: bool) -> usize {
    early as usize + 2 * late as usize
}

/// Expected per-run counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Counts {
    /// `[Alice kind][Eve pattern]`
    data: [[f64; PATTERNS]; 3],
    /// `[sequence][ONE | COHERENT]`: monitored pairs with one or two
    /// non-empty (same-block) pulses.
    pairs: [[f64; 2]; 5],
    signals: f64,
}

impl Counts {
    fn add_scaled(&mut self, o: &Counts, w: f64) {
        for k in 0..3 {
            for q in 0..PATTERNS {
                self.data[k][q] += w * o.data[k][q];
            }
        }
        for s in 0..5 {
            for t in 0..2 {
                self.pairs[s][t] += w * o.pairs[s][t];
            }
        }
        self.signals += w * o.signals;
    }

    fn scaled(&self, w: f64) -> Counts {
        let mut c = Counts::default();
        c.add_scaled(self, w);
        c
    }
}

/// A single conclusive signal: what Alice sent and what Eve reported.
#[derive(Debug, Clone, Copy)]
struct Cell {
    sent: SignalKind,
    reported: SignalKind,
    prob: f64,
}

struct Context {
    cells: Vec<Cell>,
    /// Cumulative cell probabilities for sampling.
    cumulative: Vec<f64>,
    /// Alice's kind at an inconclusive position.
    neighbour: [f64; 3],
}

impl Context {
    fn draw(&self, u: f64) -> Cell {
        let i = self.cumulative.partition_point(|c| *c <= u);
        self.cells[i.min(self.cells.len() - 1)]
    }

    /// Adds the counts of one run for both branches (full, trimmed).
    fn add_run(&self, run: &[Cell], w: f64, out: &mut [Counts; 2]) {
        let reported: Vec<SignalKind> = run.iter().map(|c| c.reported).collect();
        for (branch, trim) in [false, true].into_iter().enumerate() {
            let (lo, hi) = kept_range(&reported, trim).unwrap_or((0, 0));
            let eve = |i: usize| (lo <= i && i < hi).then(|| reported[i].pattern()).unwrap_or((false, false));
            let c = &mut out[branch];
            c.signals += w * run.len() as f64;
            for (i, cell) in run.iter().enumerate() {
                let (e, l) = eve(i);
                let sent = cell.sent.index().expect("emitted kind");
                c.data[sent][pattern_index(e, l)] += w;
                if cell.sent == SignalKind::Decoy {
                    pair(c, Sequence::D, e, l, w);
                }
                if let Some(next) = run.get(i + 1) {
                    if let Some(s) = Sequence::across(cell.sent, next.sent) {
                        pair(c, s, l, eve(i + 1).0, w);
                    }
                }
            }
            // Inconclusive neighbours are vacuum on Eve's side.
            let (first_early, _) = eve(0);
            let (_, last_late) = eve(run.len() - 1);
            for (j, pj) in self.neighbour.iter().enumerate() {
                let kind = SignalKind::EMITTED[j];
                if first_early {
                    if let Some(s) = Sequence::across(kind, run[0].sent) {
                        c.pairs[s.index()][ONE] += w * pj;
                    }
                }
                if last_late {
                    if let Some(s) = Sequence::across(run[run.len() - 1].sent, kind) {
                        c.pairs[s.index()][ONE] += w * pj;
                    }
                }
            }
        }
    }
}

fn pair(c: &mut Counts, s: Sequence, a: bool, b: bool, w: f64) {
    match (a, b) {
        (true, true) => c.pairs[s.index()][COHERENT] += w,
        (true, false) | (false, true) => c.pairs[s.index()][ONE] += w,
        (false, false) => {}
    }
}

/// Exact or sampled `E[counts | L = l]` for every batch.
fn stratum(ctx: &Context, len: usize, cfg: &RenewalConfig, seed: u64) -> Vec<[Counts; 2]> {
    let n_cells = ctx.cells.len();
    let enumerable = (n_cells as f64).powi(len as i32) <= cfg.enumerate_limit as f64;
    if enumerable {
        let mut total = [Counts::default(); 2];
        let mut digits = vec![0usize; len];
        let mut run: Vec<Cell> = vec![ctx.cells[0]; len];
        loop {
            let mut w = 1.0;
            for (slot, d) in run.iter_mut().zip(&digits) {
                *slot = ctx.cells[*d];
                w *= slot.prob;
            }
            if w > 0.0 {
                ctx.add_run(&run, w, &mut total);
            }
            // Mixed-radix increment.
            let mut pos = 0;
            loop {
                if pos == len {
                    return vec![total; cfg.batches];
                }
                digits[pos] += 1;
                if digits[pos] < n_cells {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }
    let per_batch = cfg.samples_per_stratum.div_ceil(cfg.batches).max(1);
    (0..cfg.batches)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((len as u64) << 16) | b as u64);
            let mut total = [Counts::default(); 2];
            let mut run = vec![ctx.cells[0]; len];
            let w = 1.0 / per_batch as f64;
            for _ in 0..per_batch {
                for slot in run.iter_mut() {
                    *slot = ctx.draw(rng.random::<f64>());
                }
                ctx.add_run(&run, w, &mut total);
            }
            total
        })
        .collect()
}

/// Precomputed run statistics for one measurement model.
#[derive(Debug, Clone)]
pub struct RenewalEstimator {
    p: ProtocolParams,
    weighting: VisibilityWeighting,
    batches: usize,
    max_len: usize,
    /// `suffix[m - 1][batch][branch]`: per-signal rate of counts from runs of
    /// length at least `m`, including the tail.
    suffix: Vec<Vec<[Counts; 2]>>,
}

impl RenewalEstimator {
    /// Builds the run tables. `m_min_max` is the largest `m_min` that will be
    /// evaluated.
    pub fn new(
        p: &ProtocolParams,
        model: &MeasurementModel,
        m_min_max: u32,
        cfg: RenewalConfig,
        weighting: VisibilityWeighting,
        seed: u64,
    ) -> Result<Self> {
        p.validate()?;
        if cfg.max_len < 2 || cfg.batches < 1 || cfg.samples_per_stratum < 1 {
            return Err(Error::param("max_len", cfg.max_len as f64, "renewal configuration needs max_len >= 2 and positive sample counts"));
        }
        if m_min_max < 1 {
            return Err(Error::param("m_min", m_min_max as f64, "must be >= 1"));
        }
        let priors = p.priors();
        let big_l = cfg.max_len.max(m_min_max as usize);
        let cbar = (0..3).map(|j| priors[j] * model.conclusive_prob[j]).sum::<f64>().clamp(0.0, 1.0);

        let mut cells = Vec::new();
        for (j, sent) in SignalKind::EMITTED.into_iter().enumerate() {
            for (i, reported) in SignalKind::EMITTED.into_iter().enumerate() {
                let prob = priors[j] * model.conclusive_prob[j] * model.confusion[i][j];
                if prob > 0.0 && cbar > 0.0 {
                    cells.push(Cell { sent, reported, prob: prob / cbar });
                }
            }
        }
        let mut neighbour: [f64; 3] = std::array::from_fn(|j| priors[j] * (1.0 - model.conclusive_prob[j]));
        let inc: f64 = neighbour.iter().sum();
        if inc > 0.0 {
            neighbour.iter_mut().for_each(|x| *x /= inc);
        } else {
            neighbour = priors;
        }
        let mut acc = 0.0;
        let cumulative = cells
            .iter()
            .map(|c| {
                acc += c.prob;
                acc
            })
            .collect();
        let ctx = Context { cells, cumulative, neighbour };

        let zero = vec![[Counts::default(); 2]; cfg.batches];
        let mut suffix = vec![zero.clone(); big_l + 1];
        if !ctx.cells.is_empty() {
            let q = 1.0 - cbar;
            // Weight of stratum l relative to a single conclusive signal.
            let relative = |l: usize| cbar.powi(l as i32 - 1) * (l as f64 + 2.0);
            let needed = |l: usize| q > 0.0 && relative(l) >= NEGLIGIBLE;
            let mut lengths: Vec<usize> = (1..=big_l).filter(|l| needed(*l)).collect();
            let tail = relative(big_l + 1) * big_l as f64 >= NEGLIGIBLE;
            if tail {
                lengths.push(2 * big_l);
                if !lengths.contains(&big_l) {
                    lengths.push(big_l);
                }
            }
            let tables: Vec<(usize, Vec<[Counts; 2]>)> = lengths
                .par_iter()
                .map(|&l| (l, stratum(&ctx, l, &cfg, seed)))
                .collect();
            let get = |l: usize| tables.iter().find(|(len, _)| *len == l).map(|(_, t)| t);

            // Tail: R(l) = A + B l for l > L, B = (R_2L - R_L) / L.
            let mut running = zero.clone();
            if tail {
                let t0 = q * cbar.powi(big_l as i32 + 1);
                let t1 = cbar.powi(big_l as i32 + 1) * ((big_l + 1) as f64 - big_l as f64 * cbar);
                let (r_l, r_2l) = (get(big_l).unwrap(), get(2 * big_l).unwrap());
                for b in 0..cfg.batches {
                    for br in 0..2 {
                        let slope_w = (t1 - t0 * big_l as f64) / big_l as f64;
                        let c = &mut running[b][br];
                        c.add_scaled(&r_l[b][br], t0 - slope_w);
                        c.add_scaled(&r_2l[b][br], slope_w);
                    }
                }
            }
            for l in (1..=big_l).rev() {
                if needed(l) {
                    let w = q * q * cbar.powi(l as i32);
                    let t = get(l).unwrap();
                    for b in 0..cfg.batches {
                        for br in 0..2 {
                            running[b][br].add_scaled(&t[b][br], w);
                        }
                    }
                }
                suffix[l - 1] = running.clone();
            }
        }
        suffix.truncate(big_l);
        Ok(RenewalEstimator {
            p: *p,
            weighting,
            batches: cfg.batches,
            max_len: big_l,
            suffix,
        })
    }

    /// Largest `m_min` the tables cover.
    pub fn max_m_min(&self) -> u32 {
        self.max_len as u32
    }

    fn rates(&self, m_min: u32, q_p: f64, batch: usize) -> Counts {
        let [full, trim] = &self.suffix[m_min as usize - 1][batch];
        let mut c = full.scaled(1.0 - q_p);
        c.add_scaled(trim, q_p);
        c
    }

    fn accumulator(&self, c: &Counts, beta2: f64) -> Accumulator {
        let p = &self.p;
        let priors = p.priors();
        let g1 = -(-p.t_b * beta2).exp_m1();
        let mass = [0.0, g1, g1, 1.0 - (1.0 - g1) * (1.0 - g1)];
        let both_err = g1 * (1.0 - g1) + 0.5 * g1 * g1;
        // Wrong-bin mass for Bit0 and Bit1 by Eve pattern.
        let err = [[0.0, g1, 0.0, both_err], [0.0, 0.0, g1, both_err]];
        let mon_one = -(-(1.0 - p.t_b) * beta2 / 4.0).exp_m1();
        let mon_coh = -(-(1.0 - p.t_b) * beta2).exp_m1();

        let mut acc = Accumulator {
            signals: 1.0,
            bit_signals: priors[0] + priors[1],
            ..Default::default()
        };
        for k in 0..3 {
            for q in 0..PATTERNS {
                let m = c.data[k][q] * mass[q];
                acc.all_clicks += m;
                if k < 2 {
                    acc.bit_clicks += m;
                    acc.errors += c.data[k][q] * err[k][q];
                }
            }
        }
        for s in Sequence::ALL {
            let i = s.index();
            acc.occurrences[i] = s.occurrence_probability(&priors);
            let one = c.pairs[i][ONE] * mon_one;
            acc.m1[i] = one + c.pairs[i][COHERENT] * mon_coh;
            acc.m2[i] = one;
        }
        acc
    }

    fn check(&self, a: &AttackParams) -> Result<()> {
        a.validate()?;
        if a.m_min as usize > self.max_len {
            return Err(Error::param("m_min", a.m_min as f64, "exceeds the run length covered by the estimator"));
        }
        Ok(())
    }

    /// Per-bit-signal gain, pooled over batches (the `q_inc` of `a` is fixed
    /// by the tables and not consulted).
    pub fn gain_bit(&self, a: &AttackParams) -> Result<f64> {
        self.check(a)?;
        let mut pooled = Counts::default();
        for b in 0..self.batches {
            pooled.add_scaled(&self.rates(a.m_min, a.q_p, b), 1.0 / self.batches as f64);
        }
        let acc = self.accumulator(&pooled, a.beta2);
        Ok(acc.bit_clicks / acc.bit_signals)
    }

    pub fn evaluate(&self, a: &AttackParams) -> Result<ObservedStats> {
        self.check(a)?;
        let batches: Vec<Accumulator> = (0..self.batches)
            .map(|b| self.accumulator(&self.rates(a.m_min, a.q_p, b), a.beta2))
            .collect();
        let n = self.suffix.first().map_or(0.0, |s| s.iter().map(|b| b[0].signals).sum::<f64>());
        let mut stats = finish(&batches, &self.p.priors(), self.weighting, 0);
        stats.n_signals = n.round() as u64;
        Ok(stats)
    }
}
