//! `bartm`: fit, predict, simulate missingness, and run the benchmark studies.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bartm::data::{augment, ingest_csv, write_csv, IngestOptions, LevelDictionary};
use bartm::mdm::{generate_surface, DataSource, GeneratedModelSpec, ScenarioPreset};
use bartm::model::Hyperparams;
use bartm::posterior::{predict_with, write_per_draw, write_predictions, PointEstimate};
use bartm::sampler::{run_chains, write_diagnostics, PosteriorDraws, SamplerOptions};
use bartm_harness::checks::scenario_checks;
use bartm_harness::config::{default_bhd_path, ExperimentConfig, Method};
use bartm_harness::results::write_raw_csv;
use bartm_harness::{oos_rmse, run_study};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "bartm", version, about = "BART with missing-data handling in the splitting rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV and save its posterior draws.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Apply a scenario's missingness to generated or supplied data.
    SimulateMdm(SimulateArgs),
    /// Generated-surface selection study.
    BenchSelection(BenchArgs),
    /// Boston housing study (needs the CSV).
    BenchBhd(BenchArgs),
}

#[derive(Args)]
struct CsvArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Cell value read as missing, in addition to the empty string. Repeatable.
    #[arg(long = "missing-token", default_values_t = vec!["NA".to_string()])]
    missing_tokens: Vec<String>,
}

#[derive(Args, Default)]
struct HyperArgs {
    /// JSON file of hyperparameters (flags below override it).
    #[arg(long = "hyper")]
    hyper_file: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n_burn: Option<usize>,
    #[arg(long)]
    n_post: Option<usize>,
}

impl HyperArgs {
    fn apply(&self, mut h: Hyperparams) -> Result<Hyperparams> {
        if let Some(path) = &self.hyper_file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            h = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        }
        h.m = self.m.unwrap_or(h.m);
        h.alpha = self.alpha.unwrap_or(h.alpha);
        h.beta = self.beta.unwrap_or(h.beta);
        h.k = self.k.unwrap_or(h.k);
        h.nu = self.nu.unwrap_or(h.nu);
        h.q = self.q.unwrap_or(h.q);
        h.n_burn = self.n_burn.unwrap_or(h.n_burn);
        h.n_post = self.n_post.unwrap_or(h.n_post);
        h.validate()?;
        Ok(h)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    csv: CsvArgs,
    /// Response column label.
    #[arg(long = "response-col")]
    response_col: String,
    /// Column to treat as nominal (integer-coded levels). Repeatable.
    #[arg(long = "nominal")]
    nominal: Vec<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent chains, pooled in seed order (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Where to write the model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Write the per-iteration sigma^2 and move-count trace as CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Verify the residual bookkeeping every iteration.
    #[arg(long)]
    check_residuals: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long)]
    model: PathBuf,
    /// If the CSV contains this column it is excluded from the covariates and used to report oosRMSE.
    #[arg(long = "response-col")]
    response_col: Option<String>,
    /// Credible interval mass.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Report the posterior median instead of the mean.
    #[arg(long)]
    median: bool,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every posterior draw's prediction, one row per input row.
    #[arg(long)]
    per_draw: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Builtin preset name or preset JSON path.
    #[arg(long)]
    scenario: String,
    /// Index into the preset's level grid.
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows to generate for generated-surface presets.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Source CSV for table-backed presets.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "response-col", default_value = "medv")]
    response_col: String,
    /// Token written for masked cells.
    #[arg(long = "missing-token", default_value = "NA")]
    missing_token: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Builtin preset name or preset JSON path.
    #[arg(long)]
    scenario: Option<String>,
    /// Experiment configuration JSON (flags below override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data CSV for table-backed scenarios.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "response-col")]
    response_col: Option<String>,
    /// Comma-separated level indices (default: every level).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated methods: bartm, complete_case, mean_impute.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Skip the full-data reference fit (no ratios are reported).
    #[arg(long)]
    no_reference: bool,
    /// 500 replicates and 1000/1000 iterations.
    #[arg(long)]
    full_fidelity: bool,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Raw per-replicate results CSV.
    #[arg(long)]
    raw: PathBuf,
    /// Summary JSON.
    #[arg(long)]
    summary: PathBuf,
    /// Evaluate the scenario's directional expectations; exit nonzero if any fails.
    #[arg(long)]
    check: bool,
}

/// What `fit` saves: the draws plus what is needed to read new CSVs the same way.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    response_column: String,
    nominal_columns: Vec<String>,
    levels: LevelDictionary,
    draws: PosteriorDraws,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fit(args: FitArgs) -> Result<()> {
    if args.chains == 0 {
        bail!("--chains must be at least 1");
    }
    let hyper = args.hyper.apply(Hyperparams::default())?;
    let mut options = IngestOptions::new(args.response_col.clone());
    options.missing_tokens = args.csv.missing_tokens.clone();
    options.nominal_columns = args.nominal.clone();
    let ingested = ingest_csv(&args.csv.data, &options)?;
    let d = &ingested.dataset;
    log::info!(
        "{} rows, {} covariates, {:.1}% rows with missing entries",
        d.n_rows(),
        d.n_cols(),
        100.0 * d.row_missing_fraction()
    );
    let seeds: Vec<u64> = (0..args.chains as u64).map(|c| args.seed.wrapping_add(c)).collect();
    let sampler_options = SamplerOptions {
        check_residuals: args.check_residuals,
        ..Default::default()
    };
    let draws = run_chains(&augment(d), &hyper, &seeds, sampler_options)?;
    log::info!("{} posterior draws; non-finite ratios: {}", draws.draws.len(), draws.counters.non_finite);
    if let Some(path) = &args.diagnostics {
        write_diagnostics(&draws, create(path)?)?;
    }
    let model = ModelFile {
        response_column: args.response_col,
        nominal_columns: args.nominal,
        levels: ingested.levels,
        draws,
    };
    let mut w = create(&args.model)?;
    serde_json::to_writer(&mut w, &model)?;
    w.flush()?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let file = File::open(&args.model).with_context(|| format!("opening {}", args.model.display()))?;
    let model: ModelFile = serde_json::from_reader(std::io::BufReader::new(file)).context("reading model JSON")?;
    let mut options = match &args.response_col {
        Some(col) => IngestOptions::new(col.clone()),
        None => IngestOptions::covariates_only(),
    };
    options.missing_tokens = args.csv.missing_tokens.clone();
    options.nominal_columns = model.nominal_columns.clone();
    options.levels = Some(model.levels.clone());
    let d = ingest_csv(&args.csv.data, &options)?.dataset;
    let estimate = if args.median { PointEstimate::Median } else { PointEstimate::Mean };
    let results = predict_with(&model.draws, &d, args.level, estimate)?;
    if args.response_col.is_some() {
        let points: Vec<f64> = results.iter().map(|r| r.point).collect();
        log::info!("oosRMSE {:.6}", oos_rmse(&points, d.response())?);
    }
    write_predictions(&results, output(args.out.as_deref())?)?;
    if let Some(path) = &args.per_draw {
        write_per_draw(&results, create(path)?)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let preset = ScenarioPreset::resolve(&args.scenario)?;
    let (base, response) = match preset.data {
        DataSource::GeneratedSurface => (
            generate_surface(&GeneratedModelSpec {
                n: args.n,
                seed: args.seed,
                ..Default::default()
            })?,
            "y".to_string(),
        ),
        DataSource::BostonHousing => {
            let Some(path) = &args.data else {
                bail!("scenario '{}' needs --data <csv>", preset.name);
            };
            (ingest_csv(path, &IngestOptions::new(args.response_col.clone()))?.dataset, args.response_col.clone())
        }
    };
    let out = preset.apply(&base, args.level, args.seed)?;
    log::info!(
        "level {} (value {}): {:.1}% rows with missing entries",
        args.level,
        preset.level_value(args.level)?,
        100.0 * out.row_missing_fraction()
    );
    write_csv(&out, &response, &args.missing_token, output(args.out.as_deref())?)?;
    Ok(())
}

fn bench(args: BenchArgs, bhd: bool) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let scenario = args.scenario.clone().unwrap_or_else(|| {
                if bhd { "bhd-pattern-mixture" } else { "selection-mar" }.to_string()
            });
            if bhd {
                ExperimentConfig::bhd(&scenario, default_bhd_path())
            } else {
                ExperimentConfig::selection(&scenario)
            }
        }
    };
    if let Some(s) = args.scenario {
        config.scenario = s;
    }
    if args.full_fidelity {
        config = config.full_fidelity();
    }
    if let Some(d) = args.data {
        config.data_path = Some(d);
    }
    if let Some(c) = args.response_col {
        config.response_column = c;
    }
    if let Some(l) = args.levels {
        config.levels = l;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(s) = args.seed_base {
        config.seed_base = s;
    }
    if let Some(t) = args.threads {
        config.threads = Some(t);
    }
    if let Some(methods) = args.methods {
        config.baselines = methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
    }
    if args.no_reference {
        config.reference = false;
    }
    config.hyper = args.hyper.apply(config.hyper)?;
    config.validate()?;

    let preset = ScenarioPreset::resolve(&config.scenario)?;
    let is_bhd = preset.data == DataSource::BostonHousing;
    if is_bhd != bhd {
        bail!(
            "scenario '{}' belongs to {}",
            preset.name,
            if is_bhd { "bench-bhd" } else { "bench-selection" }
        );
    }
    log::info!(
        "{}: {} replicates, levels {:?}, methods {:?}",
        preset.name,
        config.replicates,
        config.levels,
        config.baselines
    );
    let out = run_study(&config)?;
    write_raw_csv(&out.records, create(&args.raw)?)?;
    let mut w = create(&args.summary)?;
    out.summary.write_json(&mut w)?;
    w.flush()?;
    for l in &out.summary.levels {
        log::info!("level {} (value {}): {:.1}% rows missing", l.level, l.param, 100.0 * l.row_missing_fraction.mean);
    }
    if args.check {
        let checks = scenario_checks(&preset.mechanism, bhd, &out.records, &out.summary);
        if checks.is_empty() {
            log::info!("no directional expectations for scenario '{}'", preset.name);
        }
        for c in &checks {
            println!("{c}");
        }
        if checks.iter().any(|c| !c.passed) {
            std::process::exit(2);
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::SimulateMdm(a) => simulate(a),
        Command::BenchSelection(a) => bench(a, false),
        Command::BenchBhd(a) => bench(a, true),
    }
}
