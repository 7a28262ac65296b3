//! Priors and conjugate computations for the sum-of-trees model.
//!
//! All quantities live in scaled-response units (response mapped onto
//! `[-0.5, 0.5]`), where the leaf prior is `N(0, sigma_mu^2)` with
//! `sigma_mu = 0.5 / (k * sqrt(m))` and the noise prior is
//! `sigma^2 ~ nu * lambda / chi^2_nu`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::FeatureMatrix;
use crate::error::{BartError, Result};
use crate::trees::{can_split, rule_log_probability, Node, NodeId, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Number of trees.
    pub m: usize,
    /// Depth-prior base: a node at depth d splits with probability `alpha * (1 + d)^-beta`.
    pub alpha: f64,
    pub beta: f64,
    /// Leaf shrinkage multiplier.
    pub k: f64,
    /// Noise-prior degrees of freedom.
    pub nu: f64,
    /// Prior probability that sigma^2 is below the sample variance of the response.
    pub q: f64,
    pub n_burn: usize,
    pub n_post: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            m: 50,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.9,
            n_burn: 1000,
            n_post: 1000,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(BartError::Hyperparams(msg.to_string()));
        if self.m == 0 {
            return fail("m must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)");
        }
        if !(self.beta > 0.0) {
            return fail("beta must be positive");
        }
        if !(self.k > 0.0) {
            return fail("k must be positive");
        }
        if !(self.nu > 0.0) {
            return fail("nu must be positive");
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return fail("q must lie in (0, 1)");
        }
        if self.n_post == 0 {
            return fail("n_post must be at least 1");
        }
        Ok(())
    }

    pub fn sigma_mu(&self) -> f64 {
        0.5 / (self.k * (self.m as f64).sqrt())
    }

    pub fn sigma_mu_sq(&self) -> f64 {
        self.sigma_mu().powi(2)
    }

    pub fn split_probability(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }
}

/// Log prior of the subtree at `node`, whose `rows` reached it at `depth`.
///
/// Each internal node contributes `log p_split(d)` plus the log probability of
/// its rule among the candidates at that node; each leaf contributes
/// `log(1 - p_split(d))` when some rule could split it and 0 otherwise.
/// Returns `-inf` if a rule is not a candidate for the rows reaching it.
pub fn log_subtree_prior(
    tree: &Tree,
    node: NodeId,
    depth: usize,
    rows: Vec<u32>,
    x: &FeatureMatrix,
    hyper: &Hyperparams,
) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![(node, depth, rows)];
    while let Some((id, d, rows)) = stack.pop() {
        match tree.node(id) {
            Node::Leaf { .. } => {
                if can_split(x, &rows) {
                    total += (1.0 - hyper.split_probability(d)).ln();
                }
            }
            Node::Split { rule, left, right } => {
                let rule_lp = rule_log_probability(x, &rows, rule);
                if rule_lp == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                total += hyper.split_probability(d).ln() + rule_lp;
                let (l, r): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&i| rule.goes_left(x.get(i as usize, rule.attribute)));
                stack.push((*left, d + 1, l));
                stack.push((*right, d + 1, r));
            }
        }
    }
    total
}

/// Log prior of the whole tree given the training rows `rows`.
pub fn log_tree_structure_prior(tree: &Tree, x: &FeatureMatrix, rows: &[u32], hyper: &Hyperparams) -> f64 {
    log_subtree_prior(tree, crate::trees::ROOT, 0, rows.to_vec(), x, hyper)
}

/// Sufficient statistics of the residuals at one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LeafStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl LeafStats {
    pub fn from_residuals(r: &[f64]) -> Self {
        r.iter().fold(Self::default(), |s, &v| Self {
            n: s.n + 1,
            sum: s.sum + v,
            sum_sq: s.sum_sq + v * v,
        })
    }

    pub fn from_rows(rows: &[u32], residuals: &[f64]) -> Self {
        rows.iter().fold(Self::default(), |s, &i| {
            let v = residuals[i as usize];
            Self {
                n: s.n + 1,
                sum: s.sum + v,
                sum_sq: s.sum_sq + v * v,
            }
        })
    }
}

/// Log marginal likelihood of one leaf's residuals with the leaf value
/// integrated out under `N(0, sigma_mu_sq)`.
pub fn log_marginal_leaf(stats: LeafStats, sigma_sq: f64, sigma_mu_sq: f64) -> f64 {
    let n = stats.n as f64;
    let denom = sigma_sq + n * sigma_mu_sq;
    -0.5 * n * (2.0 * std::f64::consts::PI * sigma_sq).ln() + 0.5 * (sigma_sq / denom).ln()
        - stats.sum_sq / (2.0 * sigma_sq)
        + sigma_mu_sq * stats.sum * stats.sum / (2.0 * sigma_sq * denom)
}

pub fn log_marginal_likelihood(groups: &[&[f64]], sigma_sq: f64, sigma_mu_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(BartError::InvalidArgument("sigma_sq must be positive".into()));
    }
    groups.iter().try_fold(0.0, |acc, g| {
        if g.is_empty() {
            return Err(BartError::InvalidArgument("empty residual group".into()));
        }
        Ok(acc + log_marginal_leaf(LeafStats::from_residuals(g), sigma_sq, sigma_mu_sq))
    })
}

/// Sum of leaf log marginals over the subtree at `node`; `-inf` if any leaf is empty.
pub fn log_marginal_subtree(
    tree: &Tree,
    node: NodeId,
    rows: Vec<u32>,
    x: &FeatureMatrix,
    residuals: &[f64],
    sigma_sq: f64,
    sigma_mu_sq: f64,
) -> f64 {
    let parts = tree.partition_from(node, x, rows);
    let mut total = 0.0;
    let mut stack = vec![node];
    while let Some(id) = stack.pop() {
        match tree.node(id) {
            Node::Leaf { .. } => {
                if parts[id].is_empty() {
                    return f64::NEG_INFINITY;
                }
                total += log_marginal_leaf(LeafStats::from_rows(&parts[id], residuals), sigma_sq, sigma_mu_sq);
            }
            Node::Split { left, right, .. } => {
                stack.push(*left);
                stack.push(*right);
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl LeafPosterior {
    pub fn from_stats(stats: LeafStats, sigma_sq: f64, sigma_mu_sq: f64) -> Self {
        let denom = sigma_sq + stats.n as f64 * sigma_mu_sq;
        Self {
            mean: sigma_mu_sq * stats.sum / denom,
            variance: sigma_sq * sigma_mu_sq / denom,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.variance.sqrt() * z
    }
}

pub fn leaf_posterior(residuals: &[f64], sigma_sq: f64, sigma_mu_sq: f64) -> LeafPosterior {
    LeafPosterior::from_stats(LeafStats::from_residuals(residuals), sigma_sq, sigma_mu_sq)
}

/// Inverse-gamma with density proportional to `x^(-shape-1) exp(-scale/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPosterior {
    pub shape: f64,
    pub scale: f64,
}

impl SigmaPosterior {
    pub fn prior(nu: f64, lambda: f64) -> Self {
        Self {
            shape: nu / 2.0,
            scale: nu * lambda / 2.0,
        }
    }

    /// Mean, defined for `shape > 1`.
    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    /// Variance, defined for `shape > 2`.
    pub fn variance(&self) -> f64 {
        self.scale * self.scale / ((self.shape - 1.0).powi(2) * (self.shape - 2.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gamma = Gamma::new(self.shape, 1.0 / self.scale).expect("shape and scale are positive");
        1.0 / gamma.sample(rng)
    }
}

pub fn sigma_posterior(residuals: &[f64], nu: f64, lambda: f64) -> SigmaPosterior {
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    SigmaPosterior {
        shape: (nu + residuals.len() as f64) / 2.0,
        scale: (nu * lambda + sse) / 2.0,
    }
}

/// Chooses lambda so that the prior puts probability `q` on `sigma^2 < sample_var`.
pub fn calibrate_lambda(sample_var: f64, nu: f64, q: f64) -> Result<f64> {
    if !(sample_var > 0.0) {
        return Err(BartError::InvalidArgument("sample variance must be positive".into()));
    }
    let chi = ChiSquared::new(nu).map_err(|e| BartError::Hyperparams(e.to_string()))?;
    // sigma^2 = nu*lambda/X with X ~ chi^2_nu, so P(sigma^2 < s) = P(X > nu*lambda/s).
    Ok(sample_var * chi.inverse_cdf(1.0 - q) / nu)
}

/// Sample variance with the `n - 1` denominator; 0 for a single value.
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}
