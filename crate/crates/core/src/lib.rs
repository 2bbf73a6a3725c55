//! Prior elicitation from expert probability judgements.
//!
//! Judgements over partitions of the outcome space are modelled as
//! Dirichlet draws centred on the prior predictive bin probabilities of a
//! generative model; hyperparameters are fitted by maximum likelihood.

pub mod error;
pub mod experiments;
pub mod fisher;
pub mod judgement;
pub mod likelihood;
pub mod model;
pub mod models;
pub mod optim;
pub mod params;
pub mod partition;
pub mod reparam;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
pub use judgement::{Judgement, JudgementInput, JudgementSet};
pub use model::{BinProbabilities, CovariateSet, GenerativeModel, MonteCarlo};
pub use params::{HyperParams, ParamLayout};
pub use partition::{Bin, Partition, SampleSpace};
pub use optim::{fit, fit_with, FitResult, Method, OptimizerConfig};
