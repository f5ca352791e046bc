//! Deterministic network simulator for the compress-store blockchain:
//! scenario configuration, the discrete-event engine, and post-run tamper
//! experiments.

pub mod engine;
pub mod scenario;
pub mod tamper;

pub use engine::{run, Metrics, RunOutput};
pub use scenario::{theoretical_pps, Mode, Scenario};
pub use tamper::{tamper_experiment, DetectionReport, TamperSpec};
