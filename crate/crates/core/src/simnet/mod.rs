//! Deterministic simulation: scenarios, a partially synchronous network,
//! fault scripts, transcripts and property checkers.

pub mod check;
pub mod metrics;
mod net;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod transcript;

pub use check::{check, failing, sbc_trace, Property, Violation};
pub use metrics::Metrics;
pub use runner::{run, RunOutput};
pub use scenario::{Behavior, Engine, Protocol, Scenario, ScenarioError};
pub use sweep::{sweep, SweepRow};
pub use transcript::Transcript;
