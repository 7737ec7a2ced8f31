//! Discrete-time intersection simulation driving any of the controllers.

pub mod approach;
pub mod config;
pub mod events;
pub mod output;
mod world;

pub use config::{parse_speed, Controller, RdicaDetector, ScenarioConfig};
pub use events::{compute_metrics, Event, EventKind, Metrics, TripStats};
pub use world::{run_scenario, FlowSample, MinDistanceSample, RunOutput, RunSummary, VPhase, Vehicle, World};
