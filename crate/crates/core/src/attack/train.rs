use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, mix, unit_from, AttackParams, Outcome, PulseTrain, CHUNK};
use crate::discrimination::MeasurementModel;
use crate::states::{ProtocolParams, SignalKind};
use crate::{Error, Result};

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn draw_kind(u: f64, priors: &[f64; 3]) -> SignalKind {
    if u < priors[0] {
        SignalKind::Bit0
    } else if u < priors[0] + priors[1] {
        SignalKind::Bit1
    } else {
        SignalKind::Decoy
    }
}

/// Alice's i.i.d. signal choices.
pub fn sample_alice_train(p: &ProtocolParams, n: usize, seed: u64) -> Result<Vec<SignalKind>> {
    p.validate()?;
    if n == 0 {
        return Err(Error::param("n", 0.0, "need at least one signal"));
    }
    let priors = p.priors();
    let mut out = vec![SignalKind::Bit0; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = chunk_rng(seed, c);
        for s in chunk {
            *s = draw_kind(rng.random::<f64>(), &priors);
        }
    });
    Ok(out)
}

fn measure_one(kind: SignalKind, m: &MeasurementModel, rng: &mut ChaCha8Rng) -> Outcome {
    let Some(j) = kind.index() else {
        return Outcome::Inconclusive;
    };
    let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
    if u >= m.conclusive_prob[j] {
        return Outcome::Inconclusive;
    }
    let mut acc = 0.0;
    for (i, reported) in SignalKind::EMITTED.into_iter().enumerate() {
        acc += m.confusion[i][j];
        if v < acc {
            return Outcome::Identified(reported);
        }
    }
    Outcome::Identified(kind)
}

/// Eve's independent per-signal measurement results.
pub fn eve_measure_train(train: &[SignalKind], m: &MeasurementModel, seed: u64) -> Vec<Outcome> {
    let mut out = vec![Outcome::Inconclusive; train.len()];
    out.par_chunks_mut(CHUNK)
        .zip(train.par_chunks(CHUNK))
        .enumerate()
        .for_each(|(c, (dst, src))| {
            let mut rng = chunk_rng(seed, c);
            for (o, k) in dst.iter_mut().zip(src) {
                *o = measure_one(*k, m, &mut rng);
            }
        });
    out
}

/// The part of a conclusive run Eve resends, as a half-open range, or `None`.
pub(crate) fn kept_range(ids: &[SignalKind], trim: bool) -> Option<(usize, usize)> {
    if !trim {
        return Some((0, ids.len()));
    }
    // First signal with an empty early slot, last with an empty late slot.
    let first = ids.iter().position(|k| *k == SignalKind::Bit0)?;
    let last = ids.iter().rposition(|k| *k == SignalKind::Bit1)?;
    (first < last).then_some((first, last + 1))
}

/// Eve's resent train: runs shorter than `m_min` are dropped, survivors are
/// trimmed with probability `q_p`, and each kept segment becomes one coherent
/// block at intensity `beta2`.
pub fn build_eve_train(outcomes: &[Outcome], a: &AttackParams, seed: u64) -> Result<PulseTrain> {
    a.validate()?;
    let mut train = PulseTrain::vacuum(outcomes.len());
    let trim_seed = derive_seed(seed, 0x7472_696d);
    let mut block = 0u32;
    let mut ids = Vec::new();
    let mut start = 0;
    while start < outcomes.len() {
        if !outcomes[start].is_conclusive() {
            start += 1;
            continue;
        }
        ids.clear();
        let mut end = start;
        while let Some(Outcome::Identified(k)) = outcomes.get(end) {
            ids.push(*k);
            end += 1;
        }
        if ids.len() >= a.m_min as usize {
            // The coin is keyed by run position, independent of chunking.
            let trim = unit_from(mix(trim_seed ^ start as u64)) < a.q_p;
            if let Some((lo, hi)) = kept_range(&ids, trim) {
                for (offset, kind) in ids[lo..hi].iter().enumerate() {
                    let sig = start + lo + offset;
                    let (e, l) = kind.pattern();
                    for (slot, on) in [(2 * sig, e), (2 * sig + 1, l)] {
                        train.block_id[slot] = Some(block);
                        if on {
                            train.amplitudes[slot] = a.beta2;
                        }
                    }
                }
                block += 1;
            }
        }
        start = end;
    }
    Ok(train)
}

/// Alice's own pulses as one phase-coherent block.
pub fn honest_train(alice: &[SignalKind], alpha2: f64) -> PulseTrain {
    let mut train = PulseTrain::vacuum(alice.len());
    for (k, kind) in alice.iter().enumerate() {
        let (e, l) = kind.pattern();
        for (slot, on) in [(2 * k, e), (2 * k + 1, l)] {
            train.block_id[slot] = Some(0);
            if on {
                train.amplitudes[slot] = alpha2;
            }
        }
    }
    train
}
