//! Expert probability judgements and the elicitation input forms that
//! produce them (direct probabilities, roulette chips, quantiles).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CovariateSet, GenerativeModel};
use crate::partition::{ext_real_scalar, validate_partition, Partition};

/// Floor applied to judged probabilities before renormalising.
pub const JUDGEMENT_FLOOR: f64 = 1e-9;
/// Cumulative levels of the standard quantile protocol.
pub const QUANTILE_LEVELS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judgement {
    pub covariate: CovariateSet,
    pub partition: Partition,
    pub p: Vec<f64>,
    /// Set when zero entries were lifted to the floor.
    #[serde(default, skip_serializing_if = "is_false")]
    pub floored: bool,
}

impl Judgement {
    /// Validates a probability vector and floors exact zeros.
    pub fn new(covariate: CovariateSet, partition: Partition, p: Vec<f64>) -> Result<Self> {
        if p.len() != partition.len() {
            return Err(Error::LengthMismatch { left: p.len(), right: partition.len() });
        }
        if p.len() < 2 {
            return Err(Error::DegenerateJudgement);
        }
        let (p, floored) = floor_simplex(&p)?;
        Ok(Self { covariate, partition, p, floored })
    }

    pub fn from_chips(covariate: CovariateSet, partition: Partition, chips: &[u64]) -> Result<Self> {
        let total: u64 = chips.iter().sum();
        if total == 0 {
            return Err(Error::AllZeroChips);
        }
        let p: Vec<f64> = chips.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(covariate, partition, p)
    }

    /// Quantile form: `thresholds[k]` is the outcome with cumulative
    /// probability `levels[k]`. Produces bins `(lower, y_1], …, (y_K, upper]`.
    pub fn from_quantiles(
        covariate: CovariateSet,
        thresholds: &[f64],
        levels: &[f64],
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if thresholds.len() != levels.len() {
            return Err(Error::LengthMismatch { left: thresholds.len(), right: levels.len() });
        }
        if thresholds.is_empty() {
            return Err(Error::DegenerateJudgement);
        }
        let mut edges = Vec::with_capacity(thresholds.len() + 2);
        edges.push(lower);
        edges.extend_from_slice(thresholds);
        edges.push(upper);
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::NonIncreasingThresholds);
        }
        let mut cum = vec![0.0];
        cum.extend_from_slice(levels);
        cum.push(1.0);
        if cum.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("quantile levels must increase strictly inside (0, 1)".into()));
        }
        let p: Vec<f64> = cum.windows(2).map(|w| w[1] - w[0]).collect();
        Self::new(covariate, Partition::from_edges(&edges), p)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }
}

/// Checks `p` sums to one within 1e-9, then floors zeros and renormalises.
pub fn floor_simplex(p: &[f64]) -> Result<(Vec<f64>, bool)> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NotOnSimplex(format!("{p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
    }
    let floored = p.iter().any(|&v| v < JUDGEMENT_FLOOR);
    if !floored {
        return Ok((p.to_vec(), false));
    }
    let lifted: Vec<f64> = p.iter().map(|&v| v.max(JUDGEMENT_FLOOR)).collect();
    let total: f64 = lifted.iter().sum();
    Ok((lifted.iter().map(|v| v / total).collect(), true))
}

/// One covariate set's judgement in any of the supported input forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JudgementInput {
    Simplex {
        covariate: CovariateSet,
        partition: Partition,
        p: Vec<f64>,
        /// A stored judgement whose zeros were already floored; `p` is kept.
        #[serde(default, skip_serializing_if = "is_false")]
        floored: bool,
    },
    Chips {
        covariate: CovariateSet,
        partition: Partition,
        chips: Vec<u64>,
    },
    Quantiles {
        covariate: CovariateSet,
        thresholds: Vec<f64>,
        #[serde(default = "default_levels")]
        levels: Vec<f64>,
        #[serde(default = "neg_inf", with = "ext_real_scalar")]
        lower: f64,
        #[serde(default = "pos_inf", with = "ext_real_scalar")]
        upper: f64,
    },
}

fn default_levels() -> Vec<f64> {
    QUANTILE_LEVELS.to_vec()
}
fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}

impl JudgementInput {
    pub fn into_judgement(self) -> Result<Judgement> {
        match self {
            JudgementInput::Simplex { covariate, partition, p, floored: true } => {
                let mut j = Judgement::new(covariate, partition, p.clone())?;
                j.p = p;
                j.floored = true;
                Ok(j)
            }
            JudgementInput::Simplex { covariate, partition, p, floored: false } => Judgement::new(covariate, partition, p),
            JudgementInput::Chips { covariate, partition, chips } => Judgement::from_chips(covariate, partition, &chips),
            JudgementInput::Quantiles { covariate, thresholds, levels, lower, upper } => {
                Judgement::from_quantiles(covariate, &thresholds, &levels, lower, upper)
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
struct JudgementFile {
    #[serde(default)]
    expert: String,
    #[serde(default)]
    timestamp: Option<String>,
    judgements: Vec<JudgementInput>,
}

impl TryFrom<JudgementFile> for JudgementSet {
    type Error = Error;
    fn try_from(file: JudgementFile) -> Result<Self> {
        let judgements = file.judgements.into_iter().map(JudgementInput::into_judgement).collect::<Result<_>>()?;
        Ok(JudgementSet { expert: file.expert, timestamp: file.timestamp, judgements })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JudgementFile")]
pub struct JudgementSet {
    #[serde(default)]
    pub expert: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub judgements: Vec<Judgement>,
}

impl JudgementSet {
    pub fn new(judgements: Vec<Judgement>) -> Self {
        Self { expert: String::new(), timestamp: None, judgements }
    }

    pub fn len(&self) -> usize {
        self.judgements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgements.is_empty()
    }

    pub fn any_floored(&self) -> bool {
        self.judgements.iter().any(|j| j.floored)
    }

    /// Validates every partition against the model's sample space and puts
    /// cells (and the matching probabilities) in canonical order.
    pub fn prepare(&self, model: &dyn GenerativeModel) -> Result<JudgementSet> {
        if self.judgements.is_empty() {
            return Err(Error::NoJudgements);
        }
        let mut out = self.clone();
        for j in &mut out.judgements {
            j.covariate.check()?;
            let checked = validate_partition(&j.partition, &model.sample_space(&j.covariate))?;
            j.p = checked.order.iter().map(|&i| j.p[i]).collect();
            j.partition = checked.partition;
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("judgements serialise");
        hex::encode(Sha256::digest(&bytes))
    }
}
