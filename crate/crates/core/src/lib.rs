//! Simulator and analysis toolkit for wavelength-multiplexed decoy-state
//! BB84 quantum key distribution driven by a dissipative-Kerr-soliton
//! microcomb source.
//!
//! The crate models the full chain from comb spectrum to secret key rate:
//!
//! - [`comb`] — the soliton comb as an exact frequency grid under a sech²
//!   envelope, with SNR-thresholded line selection;
//! - [`wdm`] — channel assignment on a fixed grid plus DEMUX insertion loss
//!   and crosstalk;
//! - [`protocol`] — phase-encoded decoy-state BB84 encoding, interference,
//!   decoding and sifting;
//! - [`link`] — closed-form link budget, gain/QBER model and calibration;
//! - [`montecarlo`] — photon-level, seed-deterministic channel simulation;
//! - [`keyrate`] — two-decoy bounds and the asymptotic secret key rate;
//! - [`scenario`]/[`run`] — configuration files, orchestration and reports.
//!
//! The numeric core is generic over the scalar type via [`float::Real`];
//! the aliases below fix `f64` for everyday use.

// Validation predicates use `!(x > y)` so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comb;
pub mod float;
pub mod keyrate;
pub mod link;
pub mod montecarlo;
pub mod protocol;
pub mod run;
pub mod scenario;
pub mod wdm;

pub use float::Real;
pub use montecarlo::{AggressorTraffic as AggressorTraffic64, TallyCounters};
pub use protocol::{Basis, Clicks, DetectionEvent, IntensityClass, Phase, PulseRecord, ReceiverKind};
pub use wdm::ChannelId;

/// Concrete `f64` aliases for the generic core types.
pub type CombSpec = comb::CombSpec<f64>;
pub type CombLine = comb::CombLine<f64>;
pub type Channel = wdm::Channel<f64>;
pub type ChannelPlan = wdm::ChannelPlan<f64>;
pub type IntensitySet = protocol::IntensitySet<f64>;
pub type ProtocolParams = protocol::ProtocolParams<f64>;
pub type LinkBudget = link::LinkBudget<f64>;
pub type ClassGain = keyrate::ClassGain<f64>;
pub type GainSet = keyrate::GainSet<f64>;
pub type YieldBounds = keyrate::YieldBounds<f64>;
pub type RateParams = keyrate::RateParams<f64>;
pub type KeyRateReport = keyrate::KeyRateReport<f64>;
pub type KeyRateInput = keyrate::KeyRateInput<f64>;
pub type AggressorTraffic = montecarlo::AggressorTraffic<f64>;
pub type ChannelSimulator = montecarlo::ChannelSimulator<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type RunReport = run::RunReport<f64>;
pub type PaperSummary = run::PaperSummary<f64>;
