//! The generative-model interface: prior predictive bin probabilities,
//! their hyperparameter jacobians, and rectangle probabilities from a
//! joint predictive CDF.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgement::JudgementSet;
use crate::params::{HyperParams, ParamLayout};
use crate::partition::{Bin, Partition, SampleSpace};
use crate::rng::derive_seed;

/// Normalisation tolerance for closed-form backends.
pub const TOL_CLOSED: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    pub x: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl CovariateSet {
    pub fn new(x: Vec<f64>, label: impl Into<String>) -> Self {
        Self { x, label: label.into() }
    }

    pub fn empty() -> Self {
        Self { x: Vec::new(), label: String::new() }
    }

    pub fn check(&self) -> Result<()> {
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("covariate `{}` has non-finite entries", self.label)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinProbabilities {
    pub values: Vec<f64>,
    /// `n × M` derivatives with respect to the unconstrained hyperparameters.
    #[serde(skip)]
    pub jacobian: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator_sd: Option<Vec<f64>>,
}

impl BinProbabilities {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Whether the values sum to one within the tolerance of their backend.
    pub fn is_normalised(&self) -> bool {
        let err = (self.total() - 1.0).abs();
        match &self.estimator_sd {
            None => err <= TOL_CLOSED,
            Some(sd) => err <= (3.0 * sd.iter().map(|s| s * s).sum::<f64>().sqrt()).max(TOL_CLOSED),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ClosedForm,
    MonteCarlo,
}

/// Monte Carlo settings for one evaluation. The seed is fixed per call so
/// repeated evaluations at different hyperparameters share random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub draws: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { draws: 4096, seed: 0 }
    }
}

impl MonteCarlo {
    pub fn new(draws: usize, seed: u64) -> Self {
        Self { draws, seed }
    }

    /// Stream for covariate set `j`.
    pub fn for_covariate(&self, j: usize) -> Self {
        Self { draws: self.draws, seed: derive_seed(self.seed, j as u64) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCurve {
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf_se: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
    /// Point masses `(outcome, probability)` for discrete predictives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

/// Joint CDF `F(y_1, …, y_S)` of a prior predictive distribution.
pub trait PredictiveCdf {
    fn dim(&self) -> usize;
    /// Must accept infinite coordinates.
    fn cdf(&self, y: &[f64]) -> f64;
}

pub trait GenerativeModel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn layout(&self) -> ParamLayout;

    fn backend(&self) -> Backend;

    fn sample_space(&self, x: &CovariateSet) -> SampleSpace;

    /// Probabilities of every cell of `partition` under the prior predictive
    /// at covariates `x`. The jacobian is taken with respect to the
    /// unconstrained hyperparameters.
    fn bin_probabilities(
        &self,
        params: &HyperParams,
        x: &CovariateSet,
        partition: &Partition,
        want_jacobian: bool,
        mc: &MonteCarlo,
    ) -> Result<BinProbabilities>;

    fn predictive_cdf<'a>(&'a self, _params: &'a HyperParams, _x: &'a CovariateSet) -> Option<Box<dyn PredictiveCdf + 'a>> {
        None
    }

    fn predictive_curve(&self, params: &HyperParams, x: &CovariateSet, grid: &[f64], mc: &MonteCarlo) -> Result<PredictiveCurve>;

    /// Data-driven starting point for the optimisers.
    fn initial_params(&self, judgements: &JudgementSet) -> Result<HyperParams>;

    /// Maps a point to a canonical representative of its equivalence class
    /// (e.g. sorts mixture components).
    fn canonicalize(&self, params: HyperParams) -> HyperParams {
        params
    }

    /// Per-parameter prior moments for reporting.
    fn prior_summary(&self, params: &HyperParams) -> Vec<ParamSummary> {
        params
            .names
            .iter()
            .zip(&params.constrained)
            .map(|(n, &v)| ParamSummary { name: n.clone(), mean: v, variance: None, reference: None })
            .collect()
    }
}

/// Inclusion–exclusion over the `2^S` corners of `bin`:
/// `Σ_corners (−1)^{#lower} F(corner)`.
pub fn rectangle_probability(cdf: &dyn PredictiveCdf, bin: &Bin) -> Result<f64> {
    let dim = cdf.dim();
    if bin.dim() != dim || bin.upper.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: bin.dim() });
    }
    let mut total = 0.0;
    let mut corner = vec![0.0; dim];
    'corners: for mask in 0u64..(1u64 << dim) {
        let mut lowers = 0;
        for s in 0..dim {
            if mask >> s & 1 == 1 {
                if bin.lower[s] == f64::NEG_INFINITY {
                    continue 'corners;
                }
                corner[s] = bin.lower[s];
                lowers += 1;
            } else {
                corner[s] = bin.upper[s];
            }
        }
        let f = cdf.cdf(&corner);
        if !f.is_finite() {
            return Err(Error::NonFiniteCdf(corner));
        }
        total += if lowers % 2 == 0 { f } else { -f };
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Rectangle probability through a model's joint predictive CDF.
pub fn model_rectangle_probability(
    model: &dyn GenerativeModel,
    params: &HyperParams,
    x: &CovariateSet,
    bin: &Bin,
) -> Result<f64> {
    let cdf = model.predictive_cdf(params, x).ok_or(Error::CdfUnavailable)?;
    rectangle_probability(cdf.as_ref(), bin)
}

/// Dispatches to the model backend and enforces the jacobian contract.
pub fn bin_probabilities(
    model: &dyn GenerativeModel,
    params: &HyperParams,
    x: &CovariateSet,
    partition: &Partition,
    want_jacobian: bool,
    mc: &MonteCarlo,
) -> Result<BinProbabilities> {
    let out = model.bin_probabilities(params, x, partition, want_jacobian, mc)?;
    if want_jacobian && out.jacobian.is_none() {
        return Err(Error::JacobianUnavailable);
    }
    Ok(out)
}
