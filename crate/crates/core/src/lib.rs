//! Sequential intercept-resend attack on coherent-one-way (COW) quantum key
//! distribution, and the secret-key-rate upper bound it implies.
//!
//! The crate is organised bottom-up:
//!
//! * [`states`]: the COW signal alphabet, its Gram matrix, and closed-form
//!   honest-channel statistics.
//! * [`discrimination`]: Eve's per-signal measurement, from minimum-error to
//!   unambiguous, at a prescribed inconclusive rate.
//! * [`attack`]: Monte Carlo engine for the block/trim/resend attack and
//!   Bob's receiver, producing [`ObservedStats`].
//! * [`optimize`]: attack optimisation at fixed gain, the largest secure
//!   intensity, and key-rate bound sweeps.

pub mod attack;
pub mod discrimination;
mod error;
pub mod optimize;
pub mod states;
mod stats;

pub use error::{Error, Result};
pub use stats::{Estimate, ObservedStats, PerSequence, Sequence, VisibilityWeighting};
