//! Replicated train/test studies over a scenario preset's missingness grid.
//!
//! Each replicate r uses seed `seed_base + r`. Every random stream (data,
//! split, masks, each fit) is derived from that seed and a fixed tag, so a
//! record depends only on its (replicate, level, method) and never on
//! scheduling: results are identical for any worker-pool size.

use std::collections::BTreeMap;
use std::path::Path;

use bartm::data::{augment, ingest_csv, Dataset, IngestOptions};
use bartm::mdm::{derive_seed, generate_surface, DataSource, GeneratedModelSpec, ScenarioPreset, SeedScope};
use bartm::model::Hyperparams;
use bartm::posterior::predict_points;
use bartm::sampler::run_chain;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baseline::mean_impute;
use crate::config::{Cell, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::metrics::oos_rmse;
use crate::results::{aggregate, RawRecord, Summary};

const TAG_DATA: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_MDM: u64 = 3;
const TAG_FIT: u64 = 4;
const TAG_REFERENCE: u64 = 5;

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub records: Vec<RawRecord>,
    pub summary: Summary,
}

/// Runs the study the preset's data source calls for.
pub fn run_study(config: &ExperimentConfig) -> Result<StudyOutput> {
    let preset = ScenarioPreset::resolve(&config.scenario)?;
    match preset.data {
        DataSource::GeneratedSurface => run_selection_study(config),
        DataSource::BostonHousing => run_bhd_study(config),
    }
}

/// Generated-surface study: all-cases and complete-case training, each
/// scored on test rows with and without the mechanism.
pub fn run_selection_study(config: &ExperimentConfig) -> Result<StudyOutput> {
    let preset = load_preset(config, DataSource::GeneratedSurface)?;
    let source = TableSource::Generated { n_rows: config.n_rows };
    run(config, &preset, &source)
}

/// Boston housing study: missingness drawn on the full table, then an
/// 80/20 split (by default) per replicate.
pub fn run_bhd_study(config: &ExperimentConfig) -> Result<StudyOutput> {
    let preset = load_preset(config, DataSource::BostonHousing)?;
    let table = load_table(config)?;
    check_columns(&table, &preset)?;
    run(config, &preset, &TableSource::Fixed(table))
}

/// Mean empirical row-missingness fraction per grid level over the
/// configured replicates. Uses the same data and mask streams as a full run
/// but fits nothing.
pub fn mask_row_fractions(config: &ExperimentConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let preset = ScenarioPreset::resolve(&config.scenario)?;
    let source = match preset.data {
        DataSource::GeneratedSurface => TableSource::Generated { n_rows: config.n_rows },
        DataSource::BostonHousing => {
            let table = load_table(config)?;
            check_columns(&table, &preset)?;
            TableSource::Fixed(table)
        }
    };
    (0..preset.n_levels())
        .map(|level| {
            let total = (0..config.replicates)
                .map(|r| {
                    let seed = replicate_seed(config, r);
                    let base = source.draw(derive_seed(seed, &data_tags(&preset, level, TAG_DATA)))?;
                    let masked = preset.apply(&base, level, mdm_seed(&preset, seed, level))?;
                    Ok(masked.row_missing_fraction())
                })
                .sum::<Result<f64>>()?;
            Ok(total / config.replicates as f64)
        })
        .collect()
}

fn load_preset(config: &ExperimentConfig, expected: DataSource) -> Result<ScenarioPreset> {
    config.validate()?;
    let preset = ScenarioPreset::resolve(&config.scenario)?;
    if preset.data != expected {
        return Err(HarnessError::Config(format!(
            "scenario '{}' uses {:?} data, not {expected:?}",
            preset.name, preset.data
        )));
    }
    Ok(preset)
}

fn load_table(config: &ExperimentConfig) -> Result<Dataset> {
    let path = config
        .data_path
        .as_deref()
        .ok_or_else(|| HarnessError::Config("this scenario needs a data CSV (data_path)".into()))?;
    let mut options = IngestOptions::new(config.response_column.clone());
    options.missing_tokens = config.missing_tokens.clone();
    let ingested = ingest_csv(Path::new(path), &options)?;
    Ok(ingested.dataset)
}

fn check_columns(table: &Dataset, preset: &ScenarioPreset) -> Result<()> {
    let expected = preset.referenced_columns();
    let absent: Vec<&String> = expected.iter().filter(|c| table.column_index(c).is_none()).collect();
    if absent.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!(
            "scenario '{}' needs columns [{}]; missing from the data: [{}]",
            preset.name,
            expected.join(", "),
            absent.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )))
    }
}

enum TableSource {
    Generated { n_rows: usize },
    Fixed(Dataset),
}

impl TableSource {
    fn draw(&self, seed: u64) -> Result<Dataset> {
        match self {
            TableSource::Generated { n_rows } => Ok(generate_surface(&GeneratedModelSpec {
                n: *n_rows,
                seed,
                ..Default::default()
            })?),
            TableSource::Fixed(d) => Ok(d.clone()),
        }
    }
}

fn replicate_seed(config: &ExperimentConfig, replicate: usize) -> u64 {
    config.seed_base.wrapping_add(replicate as u64)
}

/// Tags for a data-scoped stream; the level enters only under a per-level policy.
fn data_tags(preset: &ScenarioPreset, level: usize, tag: u64) -> Vec<u64> {
    match preset.seed_policy.data {
        SeedScope::Replicate => vec![tag],
        SeedScope::ReplicateLevel => vec![tag, level as u64],
    }
}

fn mdm_seed(preset: &ScenarioPreset, seed: u64, level: usize) -> u64 {
    match preset.seed_policy.mdm {
        SeedScope::Replicate => derive_seed(seed, &[TAG_MDM]),
        SeedScope::ReplicateLevel => derive_seed(seed, &[TAG_MDM, level as u64]),
    }
}

/// Random train/test partition of `n` rows.
fn split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(HarnessError::Config(format!(
            "train_fraction {train_fraction} leaves {n_train} of {n} rows for training"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// One replicate's unmasked table and partition.
struct Draw {
    base: Dataset,
    train: Vec<usize>,
    test: Vec<usize>,
    reference_rmse: Option<f64>,
}

fn fit_and_score(train: &Dataset, tests: &[(&Dataset, &[f64])], hyper: &Hyperparams, seed: u64) -> Result<Vec<f64>> {
    let draws = run_chain(&augment(train), hyper, seed)?;
    tests
        .iter()
        .map(|(x, y)| oos_rmse(&predict_points(&draws, x)?, y))
        .collect()
}

fn prepare(config: &ExperimentConfig, preset: &ScenarioPreset, source: &TableSource, replicate: usize, level: usize) -> Result<Draw> {
    let seed = replicate_seed(config, replicate);
    let base = source.draw(derive_seed(seed, &data_tags(preset, level, TAG_DATA)))?;
    let (train, test) = split(base.n_rows(), config.train_fraction, derive_seed(seed, &data_tags(preset, level, TAG_SPLIT)))?;
    let reference_rmse = if config.reference {
        let tr = base.select_rows(&train)?;
        let te = base.select_rows(&test)?;
        let fit_seed = derive_seed(seed, &data_tags(preset, level, TAG_REFERENCE));
        Some(fit_and_score(&tr, &[(&te, te.response())], &config.hyper, fit_seed)?[0])
    } else {
        None
    };
    Ok(Draw {
        base,
        train,
        test,
        reference_rmse,
    })
}

fn run(config: &ExperimentConfig, preset: &ScenarioPreset, source: &TableSource) -> Result<StudyOutput> {
    let levels: Vec<usize> = if config.levels.is_empty() {
        (0..preset.n_levels()).collect()
    } else {
        config.levels.clone()
    };
    for &level in &levels {
        preset.level_value(level)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()?;
    // Data draws are shared across levels unless the policy redraws them per level.
    let data_keys: Vec<(usize, usize)> = match preset.seed_policy.data {
        SeedScope::Replicate => (0..config.replicates).map(|r| (r, 0)).collect(),
        SeedScope::ReplicateLevel => levels
            .iter()
            .flat_map(|&l| (0..config.replicates).map(move |r| (r, l)))
            .collect(),
    };
    let records = pool.install(|| -> Result<Vec<RawRecord>> {
        let prepared: Vec<Draw> = data_keys
            .par_iter()
            .map(|&(r, l)| prepare(config, preset, source, r, l))
            .collect::<Result<_>>()?;
        let draws: BTreeMap<(usize, usize), Draw> = data_keys.into_iter().zip(prepared).collect();
        let jobs: Vec<(usize, usize)> = levels
            .iter()
            .flat_map(|&l| (0..config.replicates).map(move |r| (l, r)))
            .collect();
        let per_job: Vec<Vec<RawRecord>> = jobs
            .par_iter()
            .map(|&(level, r)| {
                let key = match preset.seed_policy.data {
                    SeedScope::Replicate => (r, 0),
                    SeedScope::ReplicateLevel => (r, level),
                };
                run_cell(config, preset, &draws[&key], r, level)
            })
            .collect::<Result<_>>()?;
        Ok(per_job.into_iter().flatten().collect())
    })?;
    let summary = aggregate(&records);
    Ok(StudyOutput { records, summary })
}

fn run_cell(config: &ExperimentConfig, preset: &ScenarioPreset, draw: &Draw, replicate: usize, level: usize) -> Result<Vec<RawRecord>> {
    let seed = replicate_seed(config, replicate);
    let param = preset.level_value(level)?;
    let masked = preset.apply(&draw.base, level, mdm_seed(preset, seed, level))?;
    let row_missing_fraction = masked.row_missing_fraction();
    let train = masked.select_rows(&draw.train)?;
    let test = masked.select_rows(&draw.test)?;
    let test_off = draw.base.select_rows(&draw.test)?;

    let record = |method: Method, cell: Cell, rmse: Option<f64>| RawRecord {
        scenario: preset.name.clone(),
        level,
        param,
        replicate,
        method,
        cell,
        oos_rmse: rmse,
        ratio: rmse.zip(draw.reference_rmse).map(|(v, r)| v / r),
        row_missing_fraction,
    };
    let mut out = Vec::new();
    if let Some(r) = draw.reference_rmse {
        out.push(record(Method::Reference, Cell::FullData, Some(r)));
    }
    for &method in &config.baselines {
        let fit_seed = derive_seed(seed, &[TAG_FIT, level as u64, method.code()]);
        let scores: Option<Vec<f64>> = match method {
            Method::Bartm => Some(fit_and_score(
                &train,
                &[(&test, test.response()), (&test_off, test_off.response())],
                &config.hyper,
                fit_seed,
            )?),
            Method::CompleteCase => match train.complete_cases() {
                Ok(cc) if cc.n_rows() >= 2 => Some(fit_and_score(
                    &cc,
                    &[(&test, test.response()), (&test_off, test_off.response())],
                    &config.hyper,
                    fit_seed,
                )?),
                _ => {
                    log::warn!("replicate {replicate}, level {level}: too few complete cases; cell unavailable");
                    None
                }
            },
            Method::MeanImpute => {
                let (tr, te) = mean_impute(&train, &test)?;
                Some(fit_and_score(
                    &tr,
                    &[(&te, te.response()), (&test_off, test_off.response())],
                    &config.hyper,
                    fit_seed,
                )?)
            }
            Method::Reference => unreachable!("rejected by config validation"),
        };
        out.push(record(method, Cell::MissingTest, scores.as_ref().map(|s| s[0])));
        out.push(record(method, Cell::MdmOffTest, scores.as_ref().map(|s| s[1])));
    }
    Ok(out)
}
