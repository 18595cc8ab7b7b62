//! Cooperative mmWave hybrid beamforming: channel generation, analog and
//! digital precoder design, BS silencing and Monte Carlo evaluation.

// NaN-rejecting range checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analog;
pub mod channel;
pub mod conic;
pub mod digital;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod ofdm;
pub mod power;
pub mod rng;
pub mod silence;
pub mod validate;

pub use analog::{AnalogPrecoder, Architecture};
pub use channel::{ChannelSet, OfdmChannelSet};
pub use error::{Error, Result};
pub use montecarlo::{Metrics, Scenario};
pub use power::{BaseStation, HardwareProfile};
pub use silence::{Mode, SilenceParams};
