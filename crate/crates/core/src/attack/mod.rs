//! The sequential attack: Eve measures every signal, keeps long runs of
//! conclusive results, optionally trims them so no non-empty pulse touches a
//! coherence break, and resends the kept signals with intensity `|β|²`.
//!
//! Two estimators produce [`ObservedStats`](crate::ObservedStats):
//!
//! * [`run_attack_sim`] follows one long signal train through the whole
//!   pipeline (Alice, Eve, Bob) and accumulates expected click probabilities.
//! * [`RenewalEstimator`] conditions on run lengths, which keeps the relative
//!   error bounded when conclusive runs are rare. The optimizer uses it.

mod receiver;
mod renewal;
mod tally;
mod train;

use serde::{Deserialize, Serialize};

use crate::states::SignalKind;
use crate::{Error, Result};

pub use receiver::{bob_receive, i0e, ReceiverResponse};
pub use renewal::{RenewalConfig, RenewalEstimator};
pub use tally::{run_attack_sim, run_attack_sim_with_model, run_honest_sim, tally};
pub use train::{build_eve_train, eve_measure_train, honest_train, sample_alice_train};

/// Eve's tunable knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    /// Average inconclusive probability of her measurement.
    pub q_inc: f64,
    /// Probability of trimming a surviving run.
    pub q_p: f64,
    /// Runs shorter than this many signals are replaced by vacuum.
    pub m_min: u32,
    /// Resend intensity per non-empty pulse.
    pub beta2: f64,
}

impl AttackParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_inc) {
            return Err(Error::param("q_inc", self.q_inc, "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.q_p) {
            return Err(Error::param("q_p", self.q_p, "must lie in [0, 1]"));
        }
        if self.m_min < 1 {
            return Err(Error::param("m_min", self.m_min as f64, "must be >= 1"));
        }
        if !(self.beta2 >= 0.0 && self.beta2.is_finite()) {
            return Err(Error::param("beta2", self.beta2, "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Result of Eve's measurement on one signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Inconclusive,
    Identified(SignalKind),
}

impl Outcome {
    pub fn is_conclusive(self) -> bool {
        matches!(self, Outcome::Identified(_))
    }
}

/// Time-ordered pulse intensities, two slots per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    pub amplitudes: Vec<f64>,
    /// Phase-coherence block of every slot Eve fills, including the empty
    /// half of a kept signal; `None` for vacuum outside kept signals.
    pub block_id: Vec<Option<u32>>,
}

impl PulseTrain {
    pub fn vacuum(n_signals: usize) -> Self {
        PulseTrain {
            amplitudes: vec![0.0; 2 * n_signals],
            block_id: vec![None; 2 * n_signals],
        }
    }

    pub fn n_signals(&self) -> usize {
        self.amplitudes.len() / 2
    }
}

/// Signals generated per RNG stream. Chunking is part of the reproducibility
/// contract: the same seed gives the same train for any worker count.
pub(crate) const CHUNK: usize = 8192;

/// SplitMix64 finaliser, used to derive independent seeds and per-run coins.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Uniform in [0, 1) from a 64-bit hash.
pub(crate) fn unit_from(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
