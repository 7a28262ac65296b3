//! Bayesian additive regression trees with missingness incorporated in
//! attributes: split rules carry a direction for missing values, and optional
//! indicator columns let trees split on missingness itself.

pub mod data;
pub mod error;
pub mod mdm;
pub mod model;
pub mod posterior;
pub mod sampler;
pub mod trees;

pub use data::{augment, AugmentedDataset, Dataset, FeatureMatrix, ResponseTransform, Schema};
pub use error::{BartError, Result};
pub use mdm::{MdmSpec, PatternMixtureSpec, ScenarioPreset};
pub use model::Hyperparams;
pub use posterior::{predict, PredictionResult};
pub use sampler::{run_chain, run_chains, PosteriorDraw, PosteriorDraws, SamplerOptions};
pub use trees::{Ensemble, SplitRule, Tree};
