//! Experiment configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bartm::model::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::error::{io, HarnessError, Result};

/// How a model is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// All training rows, missingness handled in the trees.
    Bartm,
    /// Only training rows without missing entries.
    CompleteCase,
    /// Training-mean (mode for nominal) imputation of both partitions.
    MeanImpute,
    /// Full-data fit with no missingness, the denominator of every ratio.
    Reference,
}

impl Method {
    pub const BASELINES: [Method; 3] = [Method::Bartm, Method::CompleteCase, Method::MeanImpute];

    pub fn label(self) -> &'static str {
        match self {
            Method::Bartm => "bartm",
            Method::CompleteCase => "complete_case",
            Method::MeanImpute => "mean_impute",
            Method::Reference => "reference",
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64
    }
}

impl std::str::FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Bartm, Method::CompleteCase, Method::MeanImpute, Method::Reference]
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method '{s}'")))
    }
}

/// Which test rows a prediction is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    /// Test rows carrying the scenario's missingness.
    MissingTest,
    /// The same rows with the mechanism switched off: no mask, no offset.
    MdmOffTest,
    /// Reference fit scored on fully observed test rows.
    FullData,
}

impl Cell {
    pub fn label(self) -> &'static str {
        match self {
            Cell::MissingTest => "missing_test",
            Cell::MdmOffTest => "mdm_off_test",
            Cell::FullData => "full_data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin preset name or path to a preset JSON file.
    pub scenario: String,
    /// Indices into the preset's level grid; empty means every level.
    pub levels: Vec<usize>,
    pub replicates: usize,
    /// Fraction of rows used for training; the rest are test rows.
    pub train_fraction: f64,
    /// Rows drawn per replicate for generated-surface scenarios.
    pub n_rows: usize,
    pub baselines: Vec<Method>,
    /// Also fit the full-data reference and report ratios against it.
    pub reference: bool,
    pub hyper: Hyperparams,
    /// Replicate r uses seed `seed_base + r`.
    pub seed_base: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    /// CSV for table-backed scenarios.
    pub data_path: Option<PathBuf>,
    pub response_column: String,
    pub missing_tokens: Vec<String>,
}

/// Environment variable naming the Boston housing CSV.
pub const BHD_CSV_ENV: &str = "BARTM_BHD_CSV";

/// `$BARTM_BHD_CSV` if set, otherwise `data/boston.csv`.
pub fn default_bhd_path() -> PathBuf {
    std::env::var_os(BHD_CSV_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/boston.csv"))
}

/// Reduced-cost sweep settings: 50 replicates and 500/500 iterations.
pub fn desk_hyper() -> Hyperparams {
    Hyperparams {
        n_burn: 500,
        n_post: 500,
        ..Default::default()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::selection("selection-mar")
    }
}

impl ExperimentConfig {
    /// Generated-surface study: 250 training and 250 test rows.
    pub fn selection(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            levels: Vec::new(),
            replicates: 50,
            train_fraction: 0.5,
            n_rows: 500,
            baselines: vec![Method::Bartm, Method::CompleteCase],
            reference: true,
            hyper: desk_hyper(),
            seed_base: 0,
            threads: None,
            data_path: None,
            response_column: "medv".to_string(),
            missing_tokens: vec!["NA".to_string()],
        }
    }

    /// Boston housing study: 80/20 split of the table.
    pub fn bhd(scenario: &str, data_path: impl Into<PathBuf>) -> Self {
        Self {
            train_fraction: 0.8,
            baselines: vec![Method::Bartm, Method::MeanImpute],
            data_path: Some(data_path.into()),
            ..Self::selection(scenario)
        }
    }

    /// Paper-scale run: 500 replicates and 1000/1000 iterations.
    pub fn full_fidelity(mut self) -> Self {
        self.replicates = 500;
        self.hyper.n_burn = 1000;
        self.hyper.n_post = 1000;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(HarnessError::Config("replicates must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(HarnessError::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.baselines.is_empty() {
            return Err(HarnessError::Config("at least one method is required".into()));
        }
        if self.baselines.contains(&Method::Reference) {
            return Err(HarnessError::Config(
                "'reference' is controlled by the reference flag, not the method list".into(),
            ));
        }
        let distinct: BTreeSet<Method> = self.baselines.iter().copied().collect();
        if distinct.len() != self.baselines.len() {
            return Err(HarnessError::Config("duplicate method in baselines".into()));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::Config("threads must be at least 1".into()));
        }
        self.hyper.validate()?;
        Ok(())
    }
}
