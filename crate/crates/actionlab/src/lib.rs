//! File formats, configuration, scenario library and refinement sweeps on top
//! of [`actionlab_core`].

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod random;
pub mod scenarios;
pub mod suite;
pub mod sweep;

pub use config::{ConfigError, Params};
pub use pipeline::{run_action, run_control, ActionRun, ControlRun, PipelineError};
pub use scenarios::{find, registry, run_scenario, Scenario, ScenarioError, ScenarioRun, Settings};
pub use sweep::{refinement_sweep, SweepReport};
