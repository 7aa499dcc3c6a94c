//! Scenario loading, the closed-loop driver and file outputs.

pub mod config;
pub mod output;
pub mod run;

pub use config::{load_scenario, parse_scenario, preset, Reference, Scenario};
pub use output::write_outputs;
pub use run::{run, RunLog, Simulation, StepInfo, StepRecord};
