//! File formats, configuration and experiment commands on top of
//! [`enaam_core`].

pub mod config;
pub mod experiment;
pub mod model_file;
pub mod records;
pub mod trace_io;

pub use config::{ExperimentSpec, FileConfig, SpecError};
pub use experiment::{
    cmd_forecast_train, cmd_gen_traces, cmd_simulate, cmd_sweep_alpha, ExperimentError,
    GenTracesParams,
};
