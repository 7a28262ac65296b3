//! Experiment driver for missing-data BART.
//!
//! Runs the generated-surface selection study and the Boston housing study
//! over a scenario preset's missingness grid, fits BARTm alongside the
//! complete-case and mean-imputation baselines, and emits raw per-replicate
//! oosRMSE records plus a summary that can be recomputed from them.

pub mod baseline;
pub mod checks;
pub mod config;
pub mod error;
pub mod intervals;
pub mod metrics;
pub mod results;
pub mod study;

pub use baseline::mean_impute;
pub use config::{Cell, ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use metrics::oos_rmse;
pub use results::{aggregate, RawRecord, Summary};
pub use study::{run_bhd_study, run_selection_study, run_study, StudyOutput};
