//! Dataset loaders, artifact formats and the experiment harness around
//! [`histeq_rec_core`].

pub mod error;
pub mod formats;
pub mod harness;
pub mod synthetic;

pub use error::{Error, Result};
pub use harness::{emit_plot_data, run_experiment, run_on, write_report, ComparisonReport, ExperimentConfig};
