//! Built-in generative models and the name-keyed registry.

pub mod growth;
pub mod mixture;
pub mod probit;

use serde::{Deserialize, Serialize};

pub use growth::{growth_curve, GrowthModel, MeanLink};
pub use mixture::{GaussianMixtureModel, NoiseVariance};
pub use probit::ProbitGlmModel;

use crate::error::{Error, Result};
use crate::model::{Backend, GenerativeModel};
use crate::params::ParamLayout;

/// Serializable model choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelSpec {
    GaussianMixture {
        #[serde(default = "two")]
        components: usize,
        /// Fixed observation noise; estimated when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_variance: Option<f64>,
    },
    ProbitGlm {
        #[serde(default = "two")]
        dim: usize,
    },
    GrowthWeibull {
        #[serde(default)]
        link: MeanLink,
    },
}

fn two() -> usize {
    2
}

pub const MODEL_NAMES: [&str; 3] = ["gaussian-mixture", "probit-glm", "growth-weibull"];

impl ModelSpec {
    /// Default configuration for a registry name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian-mixture" => Ok(Self::GaussianMixture { components: 2, noise_variance: None }),
            "probit-glm" => Ok(Self::ProbitGlm { dim: 2 }),
            "growth-weibull" => Ok(Self::GrowthWeibull { link: MeanLink::Identity }),
            other => Err(Error::UnknownModel(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianMixture { .. } => "gaussian-mixture",
            Self::ProbitGlm { .. } => "probit-glm",
            Self::GrowthWeibull { .. } => "growth-weibull",
        }
    }

    pub fn build(&self) -> Result<Box<dyn GenerativeModel>> {
        match *self {
            Self::GaussianMixture { components, noise_variance } => {
                if components == 0 {
                    return Err(Error::InvalidConfig("a mixture needs at least one component".into()));
                }
                Ok(Box::new(match noise_variance {
                    None => GaussianMixtureModel::new(components),
                    Some(v) if v >= 0.0 => GaussianMixtureModel::with_fixed_noise(components, v),
                    Some(v) => return Err(Error::NonPositiveVariance(v)),
                }))
            }
            Self::ProbitGlm { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidConfig("probit dimension must be positive".into()));
                }
                Ok(Box::new(ProbitGlmModel::new(dim)))
            }
            Self::GrowthWeibull { link } => Ok(Box::new(GrowthModel::new(link))),
        }
    }
}

/// Registry entry describing a model's hyperparameters.
#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub spec: ModelSpec,
    pub backend: Backend,
    pub layout: ParamLayout,
    pub names: Vec<String>,
    pub unconstrained_names: Vec<String>,
}

impl ModelInfo {
    pub fn describe(spec: &ModelSpec) -> Result<Self> {
        let model = spec.build()?;
        let layout = model.layout();
        Ok(Self {
            spec: spec.clone(),
            backend: model.backend(),
            names: layout.names(),
            unconstrained_names: layout.unconstrained_names(),
            layout,
        })
    }
}

/// Default configuration of every built-in model.
pub fn registry() -> Vec<ModelInfo> {
    MODEL_NAMES
        .iter()
        .map(|n| ModelInfo::describe(&ModelSpec::from_name(n).expect("registered")).expect("defaults build"))
        .collect()
}
