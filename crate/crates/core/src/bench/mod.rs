//! Experiment harness: config files, suite runner, result tables, gradient
//! checks and the self-normalization demo.

pub mod config;
pub mod gradcheck;
pub mod run;
pub mod selu_demo;
pub mod table;

pub use config::{load_config, parse_config, DatasetSelector, ExperimentSpec, SuiteConfig, SuiteSettings};
pub use gradcheck::{run_gradcheck, GradcheckReport, GradcheckTarget, Perturbation};
pub use run::{prepare_dataset, run_suite, run_suite_file, RunOptions, Splits};
pub use selu_demo::{selu_demo, SeluDemoReport};
pub use table::{parse_csv, render_table, ResultRow, TableFormat};
