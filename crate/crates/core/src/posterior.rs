//! Prediction from posterior draws: point estimates and credible intervals
//! for the conditional mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMatrix};
use crate::error::{BartError, Result};
use crate::sampler::PosteriorDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Summed-tree output of each draw, in response units.
    pub per_draw: Vec<f64>,
}

impl PredictionResult {
    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// Linearly interpolated empirical quantile of sorted data (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Per-draw predictions (response units) for every row of `x`: `out[row][draw]`.
pub fn per_draw_predictions(draws: &PosteriorDraws, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    let width = draws.schema.n_features();
    if x.n_cols() != width {
        return Err(BartError::Schema(format!(
            "design has {} columns, model expects {width}",
            x.n_cols()
        )));
    }
    let t = draws.transform;
    Ok((0..x.n_rows())
        .into_par_iter()
        .map(|i| {
            draws
                .draws
                .iter()
                .map(|d| t.inverse(d.trees.iter().map(|tree| tree.predict_row(x, i)).sum()))
                .collect()
        })
        .collect())
}

/// Summarizes one row's per-draw outputs.
pub fn summarize(per_draw: Vec<f64>, level: f64, estimate: PointEstimate) -> Result<PredictionResult> {
    check_level(level)?;
    if per_draw.is_empty() {
        return Err(BartError::InvalidArgument("no posterior draws".into()));
    }
    let mut sorted = per_draw.clone();
    sorted.sort_by(f64::total_cmp);
    let point = match estimate {
        PointEstimate::Mean => per_draw.iter().sum::<f64>() / per_draw.len() as f64,
        PointEstimate::Median => quantile_sorted(&sorted, 0.5),
    };
    let ci_lower = quantile_sorted(&sorted, (1.0 - level) / 2.0);
    let ci_upper = quantile_sorted(&sorted, (1.0 + level) / 2.0);
    Ok(PredictionResult {
        point,
        ci_lower,
        ci_upper,
        per_draw,
    })
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(BartError::InvalidArgument(format!("credible level {level} must lie in (0, 1)")))
    }
}

/// Predicts the conditional mean for each row of `rows`, whose columns must
/// match the training covariates. Indicator columns come from each row's mask.
pub fn predict(draws: &PosteriorDraws, rows: &Dataset, level: f64) -> Result<Vec<PredictionResult>> {
    predict_with(draws, rows, level, PointEstimate::Mean)
}

pub fn predict_with(
    draws: &PosteriorDraws,
    rows: &Dataset,
    level: f64,
    estimate: PointEstimate,
) -> Result<Vec<PredictionResult>> {
    check_level(level)?;
    let x = draws.schema.design_for(rows)?;
    per_draw_predictions(draws, &x)?
        .into_par_iter()
        .map(|v| summarize(v, level, estimate))
        .collect()
}

/// Point predictions only.
pub fn predict_points(draws: &PosteriorDraws, rows: &Dataset) -> Result<Vec<f64>> {
    let x = draws.schema.design_for(rows)?;
    Ok(per_draw_predictions(draws, &x)?
        .into_iter()
        .map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthRatio {
    pub observed_width: f64,
    pub masked_width: f64,
    pub ratio: f64,
}

/// Ratio of masked-row interval width to observed-row width, per pair.
pub fn ci_width_report(pairs: &[(PredictionResult, PredictionResult)]) -> Vec<WidthRatio> {
    pairs
        .iter()
        .map(|(observed, masked)| WidthRatio {
            observed_width: observed.width(),
            masked_width: masked.width(),
            ratio: masked.width() / observed.width(),
        })
        .collect()
}

/// Writes `row_id,point,ci_lower,ci_upper`.
pub fn write_predictions<W: std::io::Write>(results: &[PredictionResult], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["row_id", "point", "ci_lower", "ci_upper"])?;
    for (i, r) in results.iter().enumerate() {
        out.write_record([i.to_string(), r.point.to_string(), r.ci_lower.to_string(), r.ci_upper.to_string()])?;
    }
    out.flush().map_err(|e| BartError::io("<predictions>", e))?;
    Ok(())
}

/// Writes one row per test row with one column per draw.
pub fn write_per_draw<W: std::io::Write>(results: &[PredictionResult], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let n_draws = results.first().map_or(0, |r| r.per_draw.len());
    let mut header = vec!["row_id".to_string()];
    header.extend((0..n_draws).map(|d| format!("draw_{d}")));
    out.write_record(&header)?;
    for (i, r) in results.iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(r.per_draw.iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush().map_err(|e| BartError::io("<per-draw>", e))?;
    Ok(())
}
