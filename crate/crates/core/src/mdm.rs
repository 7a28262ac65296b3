//! Data generation and missing-data mechanisms.
//!
//! [`generate_surface`] draws the trivariate-normal benchmark with its
//! quadratic response surface. [`inject_missingness`] masks cells under MCAR,
//! probit MAR/NMAR, or threshold mechanisms; probit inputs always use the
//! latent (pre-masking) values, so a self-referencing NMAR formula sees the
//! value it is about to hide. [`apply_pattern_mixture`] shifts the response
//! of rows whose trigger column is missing.
//!
//! Scenario presets bundle a mechanism with its parameter grid; one grid
//! entry is a "level".

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::data::Dataset;
use crate::error::{BartError, Result};

/// Mixes `tags` into `base` to derive an independent stream seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    StatNormal::standard().cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratedModelSpec {
    pub n: usize,
    pub sigma_x_sq: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub sigma_e_sq: f64,
    pub seed: u64,
}

impl Default for GeneratedModelSpec {
    fn default() -> Self {
        Self {
            n: 500,
            sigma_x_sq: 1.0,
            rho1: 0.2,
            rho2: 0.4,
            sigma_e_sq: 1.0,
            seed: 0,
        }
    }
}

pub const SURFACE_COLUMNS: [&str; 3] = ["X1", "X2", "X3"];

impl GeneratedModelSpec {
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let (s, a, b) = (self.sigma_x_sq, self.rho1, self.rho2);
        [[s, s * a, s * b], [s * a, s, s * a], [s * b, s * a, s]]
    }
}

/// Lower-triangular Cholesky factor; errors unless `a` is positive definite.
pub fn cholesky3(a: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - dot;
                if !(d > 0.0) {
                    return Err(BartError::InvalidArgument("covariance matrix is not positive definite".into()));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - dot) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// `g(x) = x1 + x2 + 2 x3 - x1^2 + x2^2 + x1 x2`.
pub fn response_surface(x: [f64; 3]) -> f64 {
    let [x1, x2, x3] = x;
    x1 + x2 + 2.0 * x3 - x1 * x1 + x2 * x2 + x1 * x2
}

/// Complete dataset with columns `X1, X2, X3` and `y = g(X) + e`.
pub fn generate_surface(spec: &GeneratedModelSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(BartError::InvalidArgument("row count must be positive".into()));
    }
    if !(spec.sigma_e_sq >= 0.0) {
        return Err(BartError::InvalidArgument("noise variance must be non-negative".into()));
    }
    let l = cholesky3(&spec.covariance())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd_e = spec.sigma_e_sq.sqrt();
    let mut rows = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let x: [f64; 3] = std::array::from_fn(|i| (0..=i).map(|k| l[i][k] * z[k]).sum());
        let e: f64 = StandardNormal.sample(&mut rng);
        y.push(response_surface(x) + sd_e * e);
        rows.push(x.to_vec());
    }
    Dataset::complete(&rows, y, SURFACE_COLUMNS.iter().map(|s| s.to_string()).collect())
}

/// One additive term `column^power` of a probit formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub column: String,
    #[serde(default = "one")]
    pub power: i32,
}

fn one() -> i32 {
    1
}

impl Term {
    pub fn new(column: impl Into<String>, power: i32) -> Self {
        Self {
            column: column.into(),
            power,
        }
    }
}

/// Transformation applied to each column before it enters a probit formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbitScaling {
    #[default]
    None,
    /// Min-max rescaling of the latent column to [0, 1].
    UnitRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Ge,
    Gt,
    Le,
    Lt,
}

impl Comparison {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparison::Ge => a >= b,
            Comparison::Gt => a > b,
            Comparison::Le => a <= b,
            Comparison::Lt => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum MdmSpec {
    /// Each target cell independently missing with probability `rate`.
    Mcar { targets: Vec<String>, rate: f64 },
    /// `P(M) = Phi(gamma0 + gamma1 * sum(terms))`; terms exclude the target.
    Mar {
        target: String,
        gamma0: f64,
        gamma1: f64,
        terms: Vec<Term>,
        #[serde(default)]
        scaling: ProbitScaling,
    },
    /// As `Mar`, but the formula may reference the target itself.
    Nmar {
        target: String,
        gamma0: f64,
        gamma1: f64,
        terms: Vec<Term>,
        #[serde(default)]
        scaling: ProbitScaling,
    },
    /// Missing with probability `rate` when `trigger <comparison> value`.
    Threshold {
        target: String,
        rate: f64,
        trigger: String,
        comparison: Comparison,
        value: f64,
    },
}

impl MdmSpec {
    pub fn targets(&self) -> Vec<&str> {
        match self {
            MdmSpec::Mcar { targets, .. } => targets.iter().map(String::as_str).collect(),
            MdmSpec::Mar { target, .. } | MdmSpec::Nmar { target, .. } | MdmSpec::Threshold { target, .. } => {
                vec![target.as_str()]
            }
        }
    }

    /// Replaces the grid parameter: `rate` for MCAR/threshold, `gamma1` for probit.
    pub fn with_level(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            MdmSpec::Mcar { rate, .. } | MdmSpec::Threshold { rate, .. } => *rate = value,
            MdmSpec::Mar { gamma1, .. } | MdmSpec::Nmar { gamma1, .. } => *gamma1 = value,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        match self {
            MdmSpec::Mcar { targets, rate } => {
                if targets.is_empty() || !rate_ok(*rate) {
                    return Err(BartError::Mechanism("MCAR needs targets and a rate in [0, 1]".into()));
                }
            }
            MdmSpec::Mar {
                target,
                gamma0,
                gamma1,
                terms,
                ..
            } => {
                if terms.iter().any(|t| &t.column == target) {
                    return Err(BartError::Mechanism(format!("MAR formula for '{target}' references the target")));
                }
                if !gamma0.is_finite() || !gamma1.is_finite() {
                    return Err(BartError::Mechanism("probit coefficients must be finite".into()));
                }
            }
            MdmSpec::Nmar { gamma0, gamma1, .. } => {
                if !gamma0.is_finite() || !gamma1.is_finite() {
                    return Err(BartError::Mechanism("probit coefficients must be finite".into()));
                }
            }
            MdmSpec::Threshold { rate, value, .. } => {
                if !rate_ok(*rate) || !value.is_finite() {
                    return Err(BartError::Mechanism("threshold needs a rate in [0, 1] and a finite value".into()));
                }
            }
        }
        Ok(())
    }
}

fn column(d: &Dataset, name: &str) -> Result<usize> {
    d.column_index(name)
        .ok_or_else(|| BartError::Mechanism(format!("unknown column '{name}'")))
}

fn latent_column(d: &Dataset, col: usize, scaling: ProbitScaling) -> Vec<f64> {
    let v: Vec<f64> = (0..d.n_rows()).map(|i| d.latent(i, col)).collect();
    match scaling {
        ProbitScaling::None => v,
        ProbitScaling::UnitRange => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            v.iter().map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 }).collect()
        }
    }
}

/// Per-row missingness probability of the spec's target(s) on `d`.
pub fn missingness_probabilities(d: &Dataset, spec: &MdmSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = d.n_rows();
    match spec {
        MdmSpec::Mcar { targets, rate } => {
            for t in targets {
                column(d, t)?;
            }
            Ok(vec![*rate; n])
        }
        MdmSpec::Mar {
            target,
            gamma0,
            gamma1,
            terms,
            scaling,
        }
        | MdmSpec::Nmar {
            target,
            gamma0,
            gamma1,
            terms,
            scaling,
        } => {
            column(d, target)?;
            let mut eta = vec![*gamma0; n];
            for term in terms {
                let values = latent_column(d, column(d, &term.column)?, *scaling);
                for (e, v) in eta.iter_mut().zip(values) {
                    *e += gamma1 * v.powi(term.power);
                }
            }
            Ok(eta.into_iter().map(standard_normal_cdf).collect())
        }
        MdmSpec::Threshold {
            target,
            rate,
            trigger,
            comparison,
            value,
        } => {
            column(d, target)?;
            let tc = column(d, trigger)?;
            Ok((0..n)
                .map(|i| if comparison.holds(d.latent(i, tc), *value) { *rate } else { 0.0 })
                .collect())
        }
    }
}

/// Masks cells according to `specs`, applied in order. All probabilities are
/// computed from latent values before any masking, and existing masks are kept.
pub fn inject_missingness(d: &Dataset, specs: &[MdmSpec], seed: u64) -> Result<Dataset> {
    let probabilities: Vec<Vec<f64>> = specs
        .iter()
        .map(|s| missingness_probabilities(d, s))
        .collect::<Result<_>>()?;
    let mut out = d.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (spec, probs) in specs.iter().zip(&probabilities) {
        for target in spec.targets() {
            let col = column(d, target)?;
            for (i, &p) in probs.iter().enumerate() {
                let u: f64 = rng.random();
                if u < p {
                    out.set_missing(i, col, true);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMixtureSpec {
    /// Covariate whose missingness shifts the response.
    pub trigger: String,
    pub mu_b: f64,
    pub sigma_b_sq: f64,
    /// +1 raises, -1 lowers the response.
    pub sign: f64,
}

impl PatternMixtureSpec {
    /// Offset mean set to `fraction` of the response range, sd to `mu_b * sd_ratio`.
    pub fn range_relative(trigger: impl Into<String>, y: &[f64], fraction: f64, sd_ratio: f64, sign: f64) -> Self {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mu_b = fraction * (hi - lo);
        let sd = mu_b * sd_ratio;
        Self {
            trigger: trigger.into(),
            mu_b,
            sigma_b_sq: sd * sd,
            sign,
        }
    }
}

/// Adds `sign * B_i`, `B_i ~ N(mu_b, sigma_b^2)`, to rows whose trigger is missing.
/// One offset is drawn for every row so the stream does not depend on the mask.
pub fn apply_pattern_mixture(d: &Dataset, spec: &PatternMixtureSpec, seed: u64) -> Result<Dataset> {
    let col = column(d, &spec.trigger)?;
    let offset = Normal::new(spec.mu_b, spec.sigma_b_sq.max(0.0).sqrt())
        .map_err(|e| BartError::Mechanism(format!("invalid offset distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = d.clone();
    for i in 0..d.n_rows() {
        let b = offset.sample(&mut rng);
        if d.is_missing(i, col) {
            out.response_mut()[i] += spec.sign * b;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Rows drawn from [`generate_surface`].
    GeneratedSurface,
    /// The Boston housing table, read from a local CSV.
    BostonHousing,
}

/// Whether a stream is redrawn per replicate or per (replicate, level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedScope {
    Replicate,
    ReplicateLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    /// Data generation and train/test split.
    pub data: SeedScope,
    /// Missingness masks and pattern-mixture offsets.
    pub mdm: SeedScope,
}

/// How a pattern-mixture offset is sized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "offset", rename_all = "snake_case")]
pub enum OffsetSize {
    Fixed { mu_b: f64, sigma_b_sq: f64 },
    /// `mu_b = fraction * range(y)`, `sigma_b = sd_ratio * mu_b`.
    RangeRelative { fraction: f64, sd_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMixtureTemplate {
    pub trigger: String,
    pub sign: f64,
    #[serde(flatten)]
    pub size: OffsetSize,
}

impl PatternMixtureTemplate {
    pub fn resolve(&self, y: &[f64]) -> PatternMixtureSpec {
        match self.size {
            OffsetSize::Fixed { mu_b, sigma_b_sq } => PatternMixtureSpec {
                trigger: self.trigger.clone(),
                mu_b,
                sigma_b_sq,
                sign: self.sign,
            },
            OffsetSize::RangeRelative { fraction, sd_ratio } => {
                PatternMixtureSpec::range_relative(self.trigger.clone(), y, fraction, sd_ratio, self.sign)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    /// Grid values substituted into every spec (see [`MdmSpec::with_level`]).
    pub levels: Vec<f64>,
    pub specs: Vec<MdmSpec>,
    #[serde(default)]
    pub pattern_mixture: Vec<PatternMixtureTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub data: DataSource,
    /// Label only ("mcar", "mar", "nmar", "threshold", "pattern_mixture").
    pub mechanism: String,
    pub target: Vec<String>,
    pub params: PresetParams,
    pub seed_policy: SeedPolicy,
}

const BUILTIN_PRESETS: &[(&str, &str)] = &[
    ("pattern-mixture", include_str!("../presets/pattern-mixture.json")),
    ("selection-mcar", include_str!("../presets/selection-mcar.json")),
    ("selection-mar", include_str!("../presets/selection-mar.json")),
    ("selection-nmar", include_str!("../presets/selection-nmar.json")),
    ("bhd-mcar", include_str!("../presets/bhd-mcar.json")),
    ("bhd-mar", include_str!("../presets/bhd-mar.json")),
    ("bhd-nmar", include_str!("../presets/bhd-nmar.json")),
    ("bhd-pattern-mixture", include_str!("../presets/bhd-pattern-mixture.json")),
];

impl ScenarioPreset {
    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN_PRESETS.iter().map(|(n, _)| *n).collect()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTIN_PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            BartError::InvalidArgument(format!(
                "unknown scenario '{name}'; available: {}",
                Self::builtin_names().join(", ")
            ))
        })?;
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let preset: Self = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BartError::io(path, e))?;
        Self::from_json(&text)
    }

    /// A builtin name or a path to a preset file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if Self::builtin_names().contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.levels.is_empty() {
            return Err(BartError::Mechanism(format!("preset '{}' has no levels", self.name)));
        }
        for level in 0..self.params.levels.len() {
            for spec in self.specs_for_level(level)? {
                spec.validate()?;
            }
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.params.levels.len()
    }

    pub fn level_value(&self, level: usize) -> Result<f64> {
        self.params.levels.get(level).copied().ok_or_else(|| {
            BartError::InvalidArgument(format!(
                "level {level} out of range for '{}' ({} levels)",
                self.name,
                self.n_levels()
            ))
        })
    }

    pub fn specs_for_level(&self, level: usize) -> Result<Vec<MdmSpec>> {
        let value = self.level_value(level)?;
        Ok(self.params.specs.iter().map(|s| s.with_level(value)).collect())
    }

    /// Every column name the preset reads or masks.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut names: BTreeMap<String, ()> = BTreeMap::new();
        for spec in &self.params.specs {
            for t in spec.targets() {
                names.insert(t.to_string(), ());
            }
            match spec {
                MdmSpec::Mar { terms, .. } | MdmSpec::Nmar { terms, .. } => {
                    for t in terms {
                        names.insert(t.column.clone(), ());
                    }
                }
                MdmSpec::Threshold { trigger, .. } => {
                    names.insert(trigger.clone(), ());
                }
                MdmSpec::Mcar { .. } => {}
            }
        }
        for pm in &self.params.pattern_mixture {
            names.insert(pm.trigger.clone(), ());
        }
        names.into_keys().collect()
    }

    /// Applies the level's masks and then any pattern-mixture offsets.
    pub fn apply(&self, d: &Dataset, level: usize, seed: u64) -> Result<Dataset> {
        let specs = self.specs_for_level(level)?;
        let masked = inject_missingness(d, &specs, derive_seed(seed, &[0]))?;
        let y = d.response().to_vec();
        self.params
            .pattern_mixture
            .iter()
            .enumerate()
            .try_fold(masked, |acc, (k, pm)| {
                apply_pattern_mixture(&acc, &pm.resolve(&y), derive_seed(seed, &[1, k as u64]))
            })
    }
}
