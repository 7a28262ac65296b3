//! Credible intervals under a pattern-mixture model.
//!
//! Fits the generated surface with threshold-triggered missingness in X2 and
//! X3 and a response offset wherever X3 is missing, then reports intervals
//! for the conditional mean at the origin with X2 and/or X3 withheld.

use bartm::data::{augment, Dataset};
use bartm::mdm::{derive_seed, generate_surface, GeneratedModelSpec, ScenarioPreset, SURFACE_COLUMNS};
use bartm::model::Hyperparams;
use bartm::posterior::{predict, PredictionResult};
use bartm::sampler::run_chain;
use rayon::prelude::*;

use crate::error::Result;

pub const PRESET: &str = "pattern-mixture";

/// `[0 0 0]`, `[0 . 0]`, `[0 0 .]`, `[0 . .]`, with `.` missing.
pub const TEST_POINTS: [[Option<f64>; 3]; 4] = [
    [Some(0.0), Some(0.0), Some(0.0)],
    [Some(0.0), None, Some(0.0)],
    [Some(0.0), Some(0.0), None],
    [Some(0.0), None, None],
];

pub const POINT_LABELS: [&str; 4] = ["[0 0 0]", "[0 . 0]", "[0 0 .]", "[0 . .]"];

/// Published conditional means at the test points.
pub const PUBLISHED_MEANS: [f64; 4] = [0.0, 1.80, 10.32, 12.12];

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalFit {
    pub seed: u64,
    /// Training rows with at least one missing entry.
    pub row_missing_fraction: f64,
    /// One result per entry of [`TEST_POINTS`].
    pub points: Vec<PredictionResult>,
}

pub fn test_points() -> Result<Dataset> {
    Ok(Dataset::new(
        TEST_POINTS.iter().map(|p| p.to_vec()).collect(),
        vec![0.0; TEST_POINTS.len()],
        SURFACE_COLUMNS.iter().map(|s| s.to_string()).collect(),
    )?)
}

/// `n_fits` independent fits with seeds `seed_base + k`.
pub fn interval_study(n_fits: usize, n_rows: usize, hyper: &Hyperparams, seed_base: u64, level: f64) -> Result<Vec<IntervalFit>> {
    let preset = ScenarioPreset::builtin(PRESET)?;
    let points = test_points()?;
    (0..n_fits)
        .into_par_iter()
        .map(|k| {
            let seed = seed_base.wrapping_add(k as u64);
            let base = generate_surface(&GeneratedModelSpec {
                n: n_rows,
                seed: derive_seed(seed, &[1]),
                ..Default::default()
            })?;
            let train = preset.apply(&base, 0, derive_seed(seed, &[3]))?;
            let draws = run_chain(&augment(&train), hyper, derive_seed(seed, &[4]))?;
            Ok(IntervalFit {
                seed,
                row_missing_fraction: train.row_missing_fraction(),
                points: predict(&draws, &points, level)?,
            })
        })
        .collect()
}

/// Number of fits whose interval at each test point covers `truth[k]`.
pub fn coverage(fits: &[IntervalFit], truth: &[f64; 4]) -> [usize; 4] {
    let mut out = [0; 4];
    for fit in fits {
        for (k, p) in fit.points.iter().enumerate() {
            out[k] += usize::from(p.covers(truth[k]));
        }
    }
    out
}

/// Interval width at each test point, averaged over fits.
pub fn mean_widths(fits: &[IntervalFit]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for fit in fits {
        for (k, p) in fit.points.iter().enumerate() {
            out[k] += p.width() / fits.len() as f64;
        }
    }
    out
}
