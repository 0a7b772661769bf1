//! Observables monitored by Alice and Bob.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::states::SignalKind;

/// A sequence `s` of Alice's signals whose adjacent non-empty pulses are
/// interfered in Bob's monitoring line.
///
/// Labels list the signals in emission order: `ZeroOne` is a `Bit0` followed
/// by a `Bit1`, whose adjacent pulses are the late pulse of the `Bit0` and
/// the early pulse of the `Bit1`. `D` is the pulse pair inside one decoy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sequence {
    D,
    ZeroOne,
    ZeroD,
    DOne,
    DD,
}

impl Sequence {
    pub const ALL: [Sequence; 5] = [
        Sequence::D,
        Sequence::ZeroOne,
        Sequence::ZeroD,
        Sequence::DOne,
        Sequence::DD,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Sequence::D => "d",
            Sequence::ZeroOne => "01",
            Sequence::ZeroD => "0d",
            Sequence::DOne => "d1",
            Sequence::DD => "dd",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.label() == label)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The cross-boundary sequence formed by two consecutive signals, if the
    /// first ends and the second starts with a non-empty pulse.
    pub fn across(first: SignalKind, second: SignalKind) -> Option<Self> {
        use SignalKind::*;
        match (first, second) {
            (Bit0, Bit1) => Some(Sequence::ZeroOne),
            (Bit0, Decoy) => Some(Sequence::ZeroD),
            (Decoy, Bit1) => Some(Sequence::DOne),
            (Decoy, Decoy) => Some(Sequence::DD),
            _ => None,
        }
    }

    /// Probability that a given position of an i.i.d. signal train starts
    /// this sequence, for priors ordered `(P0, P1, Pd)`.
    pub fn occurrence_probability(self, priors: &[f64; 3]) -> f64 {
        let [p0, p1, pd] = *priors;
        match self {
            Sequence::D => pd,
            Sequence::ZeroOne => p0 * p1,
            Sequence::ZeroD => p0 * pd,
            Sequence::DOne => pd * p1,
            Sequence::DD => pd * pd,
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One value per monitored sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerSequence<T>(pub [T; 5]);

impl<T> PerSequence<T> {
    pub fn from_fn(mut f: impl FnMut(Sequence) -> T) -> Self {
        PerSequence(Sequence::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sequence, &T)> {
        Sequence::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<Sequence> for PerSequence<T> {
    type Output = T;
    fn index(&self, s: Sequence) -> &T {
        &self.0[s.index()]
    }
}

impl<T> IndexMut<Sequence> for PerSequence<T> {
    fn index_mut(&mut self, s: Sequence) -> &mut T {
        &mut self.0[s.index()]
    }
}

impl Serialize for Sequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<T: Serialize> Serialize for PerSequence<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(5))?;
        for (s, v) in self.iter() {
            map.serialize_entry(s.label(), v)?;
        }
        map.end()
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// How the per-sequence click probabilities are pooled into `V_ave`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityWeighting {
    /// Each sequence weighted by its occurrence probability.
    #[default]
    Occurrence,
    /// All five sequences weighted equally.
    Uniform,
}

impl VisibilityWeighting {
    pub fn weights(self, priors: &[f64; 3]) -> PerSequence<f64> {
        match self {
            VisibilityWeighting::Occurrence => {
                PerSequence::from_fn(|s| s.occurrence_probability(priors))
            }
            VisibilityWeighting::Uniform => PerSequence([1.0; 5]),
        }
    }
}

/// Gain, QBER and monitoring-line statistics seen by Alice and Bob.
///
/// A `None` QBER or visibility means the conditioning event never produced a
/// click, so the ratio is undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedStats {
    /// Data-line click probability per bit signal.
    pub gain_bit: Estimate,
    /// Data-line click probability per signal of any kind.
    pub gain_all: Estimate,
    /// Probability per signal that Alice sent a bit and Bob's data line
    /// clicked, i.e. the trivial key-rate bound.
    pub gain_sifted: Estimate,
    pub qber: Option<Estimate>,
    pub p_m1: PerSequence<Estimate>,
    pub p_m2: PerSequence<Estimate>,
    pub vis: PerSequence<Option<Estimate>>,
    pub v_ave: Option<Estimate>,
    /// Number of signals (or sampled run positions) behind the estimates.
    pub n_signals: u64,
}

impl ObservedStats {
    /// Smallest defined visibility, or `None` if every visibility is undefined.
    pub fn min_visibility(&self) -> Option<f64> {
        self.vis
            .0
            .iter()
            .flatten()
            .map(|e| e.value)
            .reduce(f64::min)
    }

    /// Sequences whose visibility is undefined.
    pub fn undefined_sequences(&self) -> Vec<Sequence> {
        self.vis
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(s, _)| s)
            .collect()
    }
}
