//! Configuration, artifact layout and pipeline stages behind the `metcal`
//! command.

pub mod config;
pub mod pipeline;
pub mod store;

pub use config::{Period, RunConfig};
pub use pipeline::{
    run_diagnose, run_fit, run_predict, run_report, run_select, run_simulate, Predictor,
};
pub use store::Store;
