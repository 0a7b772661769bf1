use rayon::prelude::*;

use super::{
    bob_receive, build_eve_train, derive_seed, eve_measure_train, honest_train, sample_alice_train,
    AttackParams, ReceiverResponse,
};
use crate::discrimination::{intermediate_measurement, DiscriminationProblem, MeasurementModel};
use crate::states::{ProtocolParams, SignalKind};
use crate::stats::{Estimate, ObservedStats, PerSequence, Sequence, VisibilityWeighting};
use crate::{Error, Result};

const BATCHES: usize = 32;

/// Additive sums over one batch of signals. The estimators are ratios of
/// these sums, so batches can be pooled in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Accumulator {
    pub signals: f64,
    pub bit_signals: f64,
    /// Data-line click mass on bit signals (the sifted mass).
    pub bit_clicks: f64,
    pub all_clicks: f64,
    pub errors: f64,
    pub occurrences: [f64; 5],
    pub m1: [f64; 5],
    pub m2: [f64; 5],
}

/// Ratio of pooled sums with a batch-means (delta method) standard error.
fn ratio(batches: &[Accumulator], num: impl Fn(&Accumulator) -> f64, den: impl Fn(&Accumulator) -> f64) -> Option<Estimate> {
    let a: f64 = batches.iter().map(&num).sum();
    let b: f64 = batches.iter().map(&den).sum();
    if b <= 0.0 {
        return None;
    }
    let value = a / b;
    let m = batches.len() as f64;
    let stderr = if batches.len() > 1 {
        let ss: f64 = batches.iter().map(|x| (num(x) - value * den(x)).powi(2)).sum();
        (m / (m - 1.0) * ss).sqrt() / b
    } else {
        0.0
    };
    Some(Estimate { value, stderr })
}

pub(crate) fn finish(batches: &[Accumulator], priors: &[f64; 3], weighting: VisibilityWeighting, n_signals: u64) -> ObservedStats {
    let zero = Estimate::default();
    let gain_bit = ratio(batches, |x| x.bit_clicks, |x| x.bit_signals).unwrap_or(zero);
    let gain_all = ratio(batches, |x| x.all_clicks, |x| x.signals).unwrap_or(zero);
    let gain_sifted = ratio(batches, |x| x.bit_clicks, |x| x.signals).unwrap_or(zero);
    let qber = ratio(batches, |x| x.errors, |x| x.bit_clicks);
    let p_m1 = PerSequence::from_fn(|s| ratio(batches, |x| x.m1[s.index()], |x| x.occurrences[s.index()]).unwrap_or(zero));
    let p_m2 = PerSequence::from_fn(|s| ratio(batches, |x| x.m2[s.index()], |x| x.occurrences[s.index()]).unwrap_or(zero));
    let vis = PerSequence::from_fn(|s| {
        let i = s.index();
        ratio(batches, |x| x.m1[i] - x.m2[i], |x| x.m1[i] + x.m2[i])
    });

    // Weighted pooling of per-occurrence probabilities; the pooled
    // occurrence counts are constants, so the terms stay additive.
    let w = weighting.weights(priors);
    let totals: [f64; 5] = std::array::from_fn(|i| batches.iter().map(|x| x.occurrences[i]).sum());
    let coef = |s: Sequence| {
        let n = totals[s.index()];
        if n > 0.0 { w[s] / n } else { 0.0 }
    };
    let coefs = PerSequence::from_fn(coef);
    let v_ave = ratio(
        batches,
        |x| Sequence::ALL.iter().map(|s| coefs[*s] * (x.m1[s.index()] - x.m2[s.index()])).sum(),
        |x| Sequence::ALL.iter().map(|s| coefs[*s] * (x.m1[s.index()] + x.m2[s.index()])).sum(),
    );

    ObservedStats {
        gain_bit,
        gain_all,
        gain_sifted,
        qber,
        p_m1,
        p_m2,
        vis,
        v_ave,
        n_signals,
    }
}

fn accumulate(alice: &[SignalKind], r: &ReceiverResponse, range: std::ops::Range<usize>) -> Accumulator {
    let mut acc = Accumulator::default();
    for k in range {
        let kind = alice[k];
        let (pe, pl) = (r.data[2 * k], r.data[2 * k + 1]);
        let clicks = 1.0 - (1.0 - pe) * (1.0 - pl);
        acc.signals += 1.0;
        acc.all_clicks += clicks;
        match kind {
            SignalKind::Bit0 | SignalKind::Bit1 => {
                acc.bit_signals += 1.0;
                acc.bit_clicks += clicks;
                // A double click is decoded at random.
                let wrong = if kind == SignalKind::Bit0 { pe * (1.0 - pl) } else { pl * (1.0 - pe) };
                acc.errors += wrong + 0.5 * pe * pl;
            }
            SignalKind::Decoy => {
                let i = Sequence::D.index();
                acc.occurrences[i] += 1.0;
                acc.m1[i] += r.m1[2 * k];
                acc.m2[i] += r.m2[2 * k];
            }
            SignalKind::VacuumPair => {}
        }
        if let Some(&next) = alice.get(k + 1) {
            if let Some(s) = Sequence::across(kind, next) {
                let i = s.index();
                acc.occurrences[i] += 1.0;
                acc.m1[i] += r.m1[2 * k + 1];
                acc.m2[i] += r.m2[2 * k + 1];
            }
        }
    }
    acc
}

/// Gain, QBER and monitoring statistics of Alice's train given Bob's
/// expected click probabilities, with batch-means standard errors.
pub fn tally(alice: &[SignalKind], response: &ReceiverResponse, p: &ProtocolParams, weighting: VisibilityWeighting) -> ObservedStats {
    let n = alice.len();
    let m = BATCHES.min(n.max(1));
    let batches: Vec<Accumulator> = (0..m)
        .into_par_iter()
        .map(|b| accumulate(alice, response, b * n / m..(b + 1) * n / m))
        .collect();
    finish(&batches, &p.priors(), weighting, n as u64)
}

/// Full pipeline simulation of the attack with the measurement implied by
/// `a.q_inc`.
pub fn run_attack_sim(p: &ProtocolParams, a: &AttackParams, n: usize, seed: u64) -> Result<ObservedStats> {
    a.validate()?;
    let prob = DiscriminationProblem::from_params(p)?;
    let model = intermediate_measurement(&prob, a.q_inc)?;
    run_attack_sim_with_model(p, &model, a, n, seed, VisibilityWeighting::default())
}

/// As [`run_attack_sim`], with a precomputed measurement (`a.q_inc` is not
/// consulted).
pub fn run_attack_sim_with_model(
    p: &ProtocolParams,
    model: &MeasurementModel,
    a: &AttackParams,
    n: usize,
    seed: u64,
    weighting: VisibilityWeighting,
) -> Result<ObservedStats> {
    a.validate()?;
    let alice = sample_alice_train(p, n, derive_seed(seed, 1))?;
    let outcomes = eve_measure_train(&alice, model, derive_seed(seed, 2));
    let train = build_eve_train(&outcomes, a, derive_seed(seed, 3))?;
    let response = bob_receive(&train, p, true);
    Ok(tally(&alice, &response, p, weighting))
}

/// Monte Carlo of the honest lossy channel, for regression against the
/// closed forms.
pub fn run_honest_sim(p: &ProtocolParams, n: usize, seed: u64) -> Result<ObservedStats> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "need at least one signal"));
    }
    let alice = sample_alice_train(p, n, derive_seed(seed, 1))?;
    let response = bob_receive(&honest_train(&alice, p.alpha2), p, false);
    Ok(tally(&alice, &response, p, VisibilityWeighting::default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_standard_error_of_constant_denominator() {
        let batches: Vec<Accumulator> = [1.0, 3.0]
            .iter()
            .map(|v| Accumulator { signals: 1.0, all_clicks: *v, ..Default::default() })
            .collect();
        let e = ratio(&batches, |x| x.all_clicks, |x| x.signals).unwrap();
        assert_eq!(e.value, 2.0);
        // sample sd of {1, 3} is √2, over √2 batches
        assert!((e.stderr - 1.0).abs() < 1e-12);
        assert!(ratio(&batches, |x| x.all_clicks, |_| 0.0).is_none());
    }

    #[test]
    fn hand_built_tally() {
        use SignalKind::*;
        let p = ProtocolParams::new(0.5, 0.155, 0.5, 0.1).unwrap();
        let alice = [Bit0, Decoy, Bit1];
        // Eve copies Alice at β² = 1 in one block.
        let train = honest_train(&alice, 1.0);
        let r = bob_receive(&train, &p, true);
        let s = tally(&alice, &r, &p, VisibilityWeighting::Occurrence);
        let g1 = 1.0 - (-0.5f64).exp();
        assert!((s.gain_bit.value - g1).abs() < 1e-15);
        assert_eq!(s.qber.unwrap().value, 0.0);
        for seq in [Sequence::D, Sequence::ZeroD, Sequence::DOne] {
            assert_eq!(s.vis[seq].unwrap().value, 1.0);
            assert!((s.p_m1[seq].value - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        }
        assert!(s.vis[Sequence::ZeroOne].is_none());
        assert_eq!(s.v_ave.unwrap().value, 1.0);
    }
}
