//! Contention/reservation hybrid MAC for machine-to-machine networks.
//!
//! The crate holds the closed-form contention model ([`analytics`]), the
//! per-frame utility optimizer ([`optimizer`]), a frame-level simulator with
//! CSMA and TDMA baselines ([`sim`]) and the evaluation metrics
//! ([`metrics`]).

pub mod analytics;
pub mod config;
pub mod error;
pub mod metrics;
pub mod optimizer;
pub mod priority;
pub mod sim;
pub mod timing;
pub mod validate;

pub use analytics::{ContentionMixture, CopExpectation, MixtureEntry};
pub use config::Scenario;
pub use error::{Error, Result};
pub use metrics::{EnergyAccounting, EnergyBreakdown};
pub use optimizer::{FramePlan, GridAxes, PlannedFrame};
pub use priority::{ContentionIdentity, ProbabilityRule};
pub use sim::{SimReport, Variant};
pub use timing::{ClassConfig, Nanos, PopulationState, SlotDurations, TimingConstants};
