//! Coherent-state algebra and the COW signal ensemble.
//!
//! Time-bin convention: every signal occupies an early and a late pulse slot,
//! in that temporal order. `Bit0` carries its non-empty pulse in the late
//! slot, `Bit1` in the early slot, and a decoy fills both. All amplitudes are
//! real and positive (one global laser phase).

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::stats::{Estimate, ObservedStats, PerSequence, Sequence};
use crate::{Error, Result};

/// Alice, Bob and channel configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Mean photon number of each non-empty pulse, |α|².
    pub alpha2: f64,
    /// Decoy probability.
    pub f: f64,
    /// Transmittance of Bob's data-line beamsplitter.
    pub t_b: f64,
    /// End-to-end channel transmittance.
    pub eta: f64,
    /// Pulse period; carried for bookkeeping only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
}

impl ProtocolParams {
    pub fn new(alpha2: f64, f: f64, t_b: f64, eta: f64) -> Result<Self> {
        let p = ProtocolParams {
            alpha2,
            f,
            t_b,
            eta,
            delta_t: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha2 >= 0.0 && self.alpha2.is_finite()) {
            return Err(Error::param("alpha2", self.alpha2, "must be finite and >= 0"));
        }
        if !(self.f > 0.0 && self.f < 1.0) {
            return Err(Error::param("f", self.f, "must lie in (0, 1)"));
        }
        if !(self.t_b > 0.0 && self.t_b < 1.0) {
            return Err(Error::param("t_b", self.t_b, "must lie in (0, 1)"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param("eta", self.eta, "must lie in (0, 1]"));
        }
        if let Some(dt) = self.delta_t {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::param("delta_t", dt, "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Priors `(P0, P1, Pd)`.
    pub fn priors(&self) -> [f64; 3] {
        let p_bit = (1.0 - self.f) / 2.0;
        [p_bit, p_bit, self.f]
    }

    pub fn with_alpha2(mut self, alpha2: f64) -> Self {
        self.alpha2 = alpha2;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Honest-channel data-line click probability of one bit signal,
    /// `1 - exp(-η t_B |α|²)`.
    pub fn honest_bit_gain(&self) -> f64 {
        -(-self.eta * self.t_b * self.alpha2).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignalKind {
    Bit0,
    Bit1,
    Decoy,
    VacuumPair,
}

impl SignalKind {
    /// The three signals Alice emits, in prior order.
    pub const EMITTED: [SignalKind; 3] = [SignalKind::Bit0, SignalKind::Bit1, SignalKind::Decoy];

    /// Which of the (early, late) slots carry a non-empty pulse.
    pub fn pattern(self) -> (bool, bool) {
        match self {
            SignalKind::Bit0 => (false, true),
            SignalKind::Bit1 => (true, false),
            SignalKind::Decoy => (true, true),
            SignalKind::VacuumPair => (false, false),
        }
    }

    /// Position in [`SignalKind::EMITTED`]; `None` for the vacuum pair.
    pub fn index(self) -> Option<usize> {
        match self {
            SignalKind::Bit0 => Some(0),
            SignalKind::Bit1 => Some(1),
            SignalKind::Decoy => Some(2),
            SignalKind::VacuumPair => None,
        }
    }

    pub fn is_bit(self) -> bool {
        matches!(self, SignalKind::Bit0 | SignalKind::Bit1)
    }

    pub fn non_empty_pulses(self) -> u32 {
        let (e, l) = self.pattern();
        e as u32 + l as u32
    }
}

/// `|<γ|δ>|` for coherent states with real amplitudes `√gamma2`, `√delta2`.
///
/// `same_phase = false` puts the second amplitude at phase π.
pub fn coherent_overlap(gamma2: f64, delta2: f64, same_phase: bool) -> Result<f64> {
    if !(gamma2 >= 0.0 && gamma2.is_finite()) {
        return Err(Error::param("gamma2", gamma2, "intensity must be finite and >= 0"));
    }
    if !(delta2 >= 0.0 && delta2.is_finite()) {
        return Err(Error::param("delta2", delta2, "intensity must be finite and >= 0"));
    }
    let (g, d) = (gamma2.sqrt(), delta2.sqrt());
    let dist = if same_phase { g - d } else { g + d };
    Ok((-0.5 * dist * dist).exp())
}

/// Gram matrix and priors of Alice's three signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEnsemble {
    pub gram: Matrix3<f64>,
    pub priors: [f64; 3],
}

impl SignalEnsemble {
    pub fn alpha2(&self) -> f64 {
        // <Bit0|Bit1> = exp(-|α|²)
        -self.gram[(0, 1)].ln()
    }
}

pub fn build_ensemble(p: &ProtocolParams) -> Result<SignalEnsemble> {
    p.validate()?;
    let pulse = |a: bool, b: bool| -> f64 {
        let (x, y) = (if a { p.alpha2 } else { 0.0 }, if b { p.alpha2 } else { 0.0 });
        // Validated intensities, cannot fail.
        coherent_overlap(x, y, true).unwrap_or(1.0)
    };
    let mut gram = Matrix3::zeros();
    for (i, si) in SignalKind::EMITTED.iter().enumerate() {
        for (j, sj) in SignalKind::EMITTED.iter().enumerate() {
            let (ei, li) = si.pattern();
            let (ej, lj) = sj.pattern();
            gram[(i, j)] = pulse(ei, ej) * pulse(li, lj);
        }
    }
    Ok(SignalEnsemble {
        gram,
        priors: p.priors(),
    })
}

/// Result of the visibility formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Visibility {
    Defined(f64),
    /// Neither detector clicked for the conditioning event.
    Undefined,
}

impl Visibility {
    pub fn from_masses(m1: f64, m2: f64) -> Self {
        let total = m1 + m2;
        if total > 0.0 {
            Visibility::Defined((m1 - m2) / total)
        } else {
            Visibility::Undefined
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Visibility::Defined(v) => Some(v),
            Visibility::Undefined => None,
        }
    }
}

/// `(p1 - p2) / (p1 + p2)` from the click probabilities of D_M1 and D_M2.
pub fn visibility(p1: f64, p2: f64) -> Result<Visibility> {
    for (name, p) in [("p1", p1), ("p2", p2)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(name, p, "click probability must lie in [0, 1]"));
        }
    }
    Ok(Visibility::from_masses(p1, p2))
}

/// Closed-form statistics of a lossy channel without Eve and with ideal
/// detectors.
pub fn honest_stats(p: &ProtocolParams) -> Result<ObservedStats> {
    p.validate()?;
    let priors = p.priors();
    let mu_data = p.eta * p.t_b * p.alpha2;
    let click = |n: f64| -(-n * mu_data).exp_m1();
    let gain_bit = click(1.0);
    let gain_all = (1.0 - p.f) * gain_bit + p.f * click(2.0);
    // Two equal in-phase pulses interfere fully in D_M1:
    // (1 - t_B)/4 · η · |2α|².
    let p_m1 = -(-(1.0 - p.t_b) * p.eta * p.alpha2).exp_m1();
    let defined = p_m1 > 0.0;
    let vis = |_| defined.then(|| Estimate::exact(1.0));
    Ok(ObservedStats {
        gain_bit: Estimate::exact(gain_bit),
        gain_all: Estimate::exact(gain_all),
        gain_sifted: Estimate::exact((priors[0] + priors[1]) * gain_bit),
        qber: (gain_bit > 0.0).then(|| Estimate::exact(0.0)),
        p_m1: PerSequence([Estimate::exact(p_m1); 5]),
        p_m2: PerSequence([Estimate::exact(0.0); 5]),
        vis: PerSequence::from_fn(vis),
        v_ave: defined.then(|| Estimate::exact(1.0)),
        n_signals: 0,
    })
}

/// Occurrence probability of every monitored sequence.
pub fn sequence_probabilities(p: &ProtocolParams) -> PerSequence<f64> {
    let priors = p.priors();
    PerSequence::from_fn(|s: Sequence| s.occurrence_probability(&priors))
}
