//! Session documents and the judgement forms accepted by the service.

use chrono::{SecondsFormat, Utc};
use prior_forge::judgement::QUANTILE_LEVELS;
use prior_forge::models::{ModelSpec, MODEL_NAMES};
use prior_forge::partition::{ext_real, validate_partition};
use prior_forge::{CovariateSet, FitResult, GenerativeModel, Judgement, JudgementSet, Partition};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, ServiceError};

/// Version of the stored session layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Draft,
    Fitted,
    Stale,
}

/// One covariate set of the design, with the partition its judgements use.
/// Quantile judgements bring their own partition, so it may be left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignEntry {
    pub covariate: CovariateSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub model: ModelSpec,
    pub schema_version: u32,
    pub design: Vec<DesignEntry>,
    pub judgements: JudgementSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    pub status: Status,
    pub created: String,
    pub updated: String,
}

/// A judgement for one design covariate, referenced by label.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Submission {
    Simplex {
        covariate: String,
        #[serde(default)]
        partition: Option<Partition>,
        p: Vec<f64>,
    },
    Chips {
        covariate: String,
        #[serde(default)]
        partition: Option<Partition>,
        chips: Vec<u64>,
    },
    Quantiles {
        covariate: String,
        thresholds: Vec<f64>,
        #[serde(default)]
        levels: Option<Vec<f64>>,
        #[serde(default, with = "opt_ext_real")]
        lower: Option<f64>,
        #[serde(default, with = "opt_ext_real")]
        upper: Option<f64>,
    },
}

mod opt_ext_real {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::ext_real::scalar")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

impl Submission {
    pub fn label(&self) -> &str {
        match self {
            Self::Simplex { covariate, .. } | Self::Chips { covariate, .. } | Self::Quantiles { covariate, .. } => covariate,
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Reads a model either as a registry name or as a full specification
/// object, reporting unregistered names as [`ServiceError::UnknownModel`].
pub fn parse_model(value: &Value) -> Result<ModelSpec> {
    let name = match value {
        Value::String(s) => s.as_str(),
        Value::Object(m) => m.get("name").and_then(Value::as_str).ok_or_else(|| ServiceError::BadRequest("model needs a `name`".into()))?,
        _ => return Err(ServiceError::BadRequest("model must be a name or an object".into())),
    };
    if !MODEL_NAMES.contains(&name) {
        return Err(ServiceError::UnknownModel(name.into()));
    }
    let spec = match value {
        Value::String(s) => ModelSpec::from_name(s).map_err(|_| ServiceError::UnknownModel(s.clone()))?,
        other => serde_json::from_value(other.clone()).map_err(|e| ServiceError::BadRequest(format!("model: {e}")))?,
    };
    spec.build().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    Ok(spec)
}

impl Session {
    pub fn new(id: String, model: ModelSpec, design: Vec<DesignEntry>) -> Result<Self> {
        let built = model.build().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        for (i, entry) in design.iter().enumerate() {
            let label = &entry.covariate.label;
            if label.is_empty() {
                return Err(ServiceError::BadRequest(format!("design entry {i} has no label")));
            }
            if design[..i].iter().any(|e| &e.covariate.label == label) {
                return Err(ServiceError::BadRequest(format!("duplicate covariate label `{label}`")));
            }
            entry.covariate.check().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            if let Some(p) = &entry.partition {
                validate_partition(p, &built.sample_space(&entry.covariate))
                    .map_err(|source| ServiceError::InvalidPartition { label: label.clone(), source })?;
            }
        }
        let stamp = now();
        Ok(Self {
            id,
            model,
            schema_version: SCHEMA_VERSION,
            design,
            judgements: JudgementSet::new(Vec::new()),
            fit: None,
            status: Status::Draft,
            created: stamp.clone(),
            updated: stamp,
        })
    }

    pub fn build_model(&self) -> Result<Box<dyn GenerativeModel>> {
        self.model.build().map_err(|e| ServiceError::Storage(format!("stored model does not build: {e}")))
    }

    pub fn entry(&self, label: &str) -> Result<&DesignEntry> {
        self.design
            .iter()
            .find(|e| e.covariate.label == label)
            .ok_or_else(|| ServiceError::UnknownCovariate(label.into()))
    }

    /// Hash of the judgements as the optimiser sees them (canonical cell
    /// order); this is the value a [`FitResult`] records.
    pub fn judgements_hash(&self) -> String {
        match self.build_model().ok().and_then(|m| self.judgements.prepare(m.as_ref()).ok()) {
            Some(prepared) => prepared.content_hash(),
            None => self.judgements.content_hash(),
        }
    }

    /// Converts each submission to a simplex judgement and replaces any
    /// earlier judgement for the same covariate. Nothing changes when one
    /// of them is invalid.
    pub fn submit(&mut self, submissions: Vec<Submission>, expert: Option<String>) -> Result<()> {
        let model = self.build_model()?;
        let mut judgements = self.judgements.judgements.clone();
        for s in submissions {
            let label = s.label().to_string();
            let entry = self.entry(&label)?;
            let j = self.convert(model.as_ref(), entry, s)?;
            validate_partition(&j.partition, &model.sample_space(&j.covariate))
                .map_err(|source| ServiceError::InvalidPartition { label: label.clone(), source })?;
            match judgements.iter_mut().find(|o| o.covariate.label == label) {
                Some(slot) => *slot = j,
                None => judgements.push(j),
            }
        }
        let order = |j: &Judgement| self.design.iter().position(|e| e.covariate.label == j.covariate.label);
        judgements.sort_by_key(order);
        self.judgements.judgements = judgements;
        if let Some(e) = expert {
            self.judgements.expert = e;
        }
        self.refresh_status();
        self.touch();
        Ok(())
    }

    fn convert(&self, model: &dyn GenerativeModel, entry: &DesignEntry, s: Submission) -> Result<Judgement> {
        let label = entry.covariate.label.clone();
        let invalid = |source| ServiceError::InvalidJudgement { label: label.clone(), source };
        let partition = |own: Option<Partition>| {
            own.or_else(|| entry.partition.clone()).ok_or_else(|| {
                ServiceError::BadRequest(format!("covariate `{label}` has no partition; send one with the judgement"))
            })
        };
        let covariate = entry.covariate.clone();
        match s {
            Submission::Simplex { partition: own, p, .. } => Judgement::new(covariate, partition(own)?, p).map_err(invalid),
            Submission::Chips { partition: own, chips, .. } => {
                Judgement::from_chips(covariate, partition(own)?, &chips).map_err(invalid)
            }
            Submission::Quantiles { thresholds, levels, lower, upper, .. } => {
                let (lo, hi) = match model.sample_space(&covariate).bounds() {
                    Some((l, u)) if l.len() == 1 => (l[0], u[0]),
                    _ => {
                        return Err(ServiceError::BadRequest(format!(
                            "quantile judgements need a one-dimensional continuous outcome (covariate `{label}`)"
                        )))
                    }
                };
                let levels = levels.unwrap_or_else(|| QUANTILE_LEVELS.to_vec());
                Judgement::from_quantiles(covariate, &thresholds, &levels, lower.unwrap_or(lo), upper.unwrap_or(hi)).map_err(invalid)
            }
        }
    }

    /// Stores a finished fit. It counts as current only if it was computed
    /// from the judgements the session holds now.
    pub fn record_fit(&mut self, fit: FitResult) {
        self.fit = Some(fit);
        self.refresh_status();
        self.touch();
    }

    fn refresh_status(&mut self) {
        self.status = match &self.fit {
            None => Status::Draft,
            Some(f) if f.judgements_hash == self.judgements_hash() => Status::Fitted,
            Some(_) => Status::Stale,
        };
    }

    fn touch(&mut self) {
        self.updated = now();
    }
}

/// Plain-language reading of α̂. The cut points are service policy.
pub fn alpha_band(alpha_hat: f64) -> &'static str {
    if alpha_hat < 5.0 {
        "poor"
    } else if alpha_hat <= 50.0 {
        "moderate"
    } else {
        "close"
    }
}

pub const ALPHA_BAND_POLICY: &str = "service policy: alpha_hat < 5 poor, 5 to 50 moderate, > 50 close";

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn mixture_session() -> Session {
        let design = vec![DesignEntry { covariate: CovariateSet::new(vec![], "y"), partition: Some(Partition::from_edges(&[f64::NEG_INFINITY, -1.0, 0.0, 1.0, f64::INFINITY])) }];
        Session::new("s".into(), ModelSpec::from_name("gaussian-mixture").unwrap(), design).unwrap()
    }

    #[test]
    fn model_names_are_checked() {
        assert!(matches!(parse_model(&json!("nope")), Err(ServiceError::UnknownModel(_))));
        assert!(matches!(parse_model(&json!({"name": "nope"})), Err(ServiceError::UnknownModel(_))));
        assert_eq!(parse_model(&json!({"name": "probit-glm", "dim": 3})).unwrap(), ModelSpec::ProbitGlm { dim: 3 });
    }

    #[test]
    fn chips_replace_earlier_judgement() {
        let mut s = mixture_session();
        let sub: Submission = serde_json::from_value(json!({"covariate": "y", "chips": [1, 1, 1, 1]})).unwrap();
        s.submit(vec![sub], None).unwrap();
        let sub: Submission = serde_json::from_value(json!({"covariate": "y", "chips": [2, 3, 5, 0]})).unwrap();
        s.submit(vec![sub], None).unwrap();
        assert_eq!(s.judgements.len(), 1);
        assert!(s.judgements.judgements[0].floored);
        assert_eq!(s.status, Status::Draft);
    }

    #[test]
    fn quantile_bounds_come_from_the_sample_space() {
        let design = vec![DesignEntry { covariate: CovariateSet::new(vec![10.0], "age 10"), partition: None }];
        let mut s = Session::new("g".into(), ModelSpec::from_name("growth-weibull").unwrap(), design).unwrap();
        let sub: Submission = serde_json::from_value(json!({"covariate": "age 10", "thresholds": [130, 135, 140, 145, 150]})).unwrap();
        s.submit(vec![sub], None).unwrap();
        let j = &s.judgements.judgements[0];
        assert_eq!(j.partition.intervals().unwrap()[0], (0.0, 130.0));
        for (got, want) in j.p.iter().zip([0.10, 0.15, 0.25, 0.25, 0.15, 0.10]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn bands() {
        assert_eq!(alpha_band(4.9), "poor");
        assert_eq!(alpha_band(5.0), "moderate");
        assert_eq!(alpha_band(50.0), "moderate");
        assert_eq!(alpha_band(50.1), "close");
    }
}
