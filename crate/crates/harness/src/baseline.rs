//! Mean/mode imputation baseline.
//!
//! Statistics come from the training rows only and are applied unchanged to
//! the test rows, as if test records arrived one at a time.

use std::collections::BTreeMap;

use bartm::data::{ColumnKind, Dataset};

use crate::error::{HarnessError, Result};

/// Per-column fill values computed from `train`: observed mean for numeric
/// columns, most frequent code (smallest on ties) for nominal ones, and 0 for
/// columns with no observed value.
pub fn fill_values(train: &Dataset) -> Vec<f64> {
    (0..train.n_cols())
        .map(|j| {
            let observed: Vec<f64> = (0..train.n_rows()).filter_map(|i| train.get(i, j)).collect();
            if observed.is_empty() {
                log::warn!(
                    "column '{}' has no observed training values; imputing 0",
                    train.column_names()[j]
                );
                return 0.0;
            }
            match train.column_kinds()[j] {
                ColumnKind::Nominal => mode(&observed),
                _ => observed.iter().sum::<f64>() / observed.len() as f64,
            }
        })
        .collect()
}

fn mode(values: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v as i64).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map_or(0.0, |(code, _)| code as f64)
}

/// Fills every masked cell and clears the mask.
pub fn impute_with(d: &Dataset, fills: &[f64]) -> Result<Dataset> {
    if fills.len() != d.n_cols() {
        return Err(HarnessError::Config(format!(
            "{} fill values for {} columns",
            fills.len(),
            d.n_cols()
        )));
    }
    let mut out = d.clone();
    for i in 0..d.n_rows() {
        for (j, &fill) in fills.iter().enumerate() {
            if d.is_missing(i, j) {
                out.set_value(i, j, fill);
                out.set_missing(i, j, false);
            }
        }
    }
    Ok(out)
}

/// Imputes both partitions with training-column statistics.
pub fn mean_impute(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    if train.column_names() != test.column_names() {
        return Err(HarnessError::Config("train and test columns differ".into()));
    }
    let fills = fill_values(train);
    Ok((impute_with(train, &fills)?, impute_with(test, &fills)?))
}
