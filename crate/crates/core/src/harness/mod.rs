//! Named scenarios, Monte Carlo runs and result artifacts.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{ScenarioConfig, SweepConfig, UserEntry, UsersSpec};
pub use output::emit_outputs;
pub use presets::{preset, PRESETS};
pub use run::{
    run_model_scenario, run_sweep, run_waveform_scenario, ResultTable, RunMode, SweepPoint,
    UserResult,
};
