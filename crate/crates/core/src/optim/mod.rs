//! Maximum-likelihood fitting of the hyperparameters λ and the shared
//! concentration α. All optimisers work in unconstrained coordinates and
//! alternate λ updates with an α refresh (closed-form α̂, optionally
//! polished by the exact 1-D maximiser).

mod natgrad;
mod nelder_mead;
mod stochastic;

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgement::JudgementSet;
use crate::likelihood::{alpha_hat_from, alpha_mle, fitted_probabilities, loglik_at, ConcentrationEstimate};
use crate::model::{BinProbabilities, CovariateSet, GenerativeModel, MonteCarlo, ParamSummary};
use crate::params::HyperParams;
use crate::partition::Partition;

pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    #[serde(alias = "natgrad")]
    NaturalGradient,
    #[serde(alias = "stoch-natgrad")]
    StochasticNaturalGradient,
    NelderMead,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::InvalidConfig(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Initial step size η.
    pub step_size: f64,
    pub max_iter: usize,
    /// Bound on the ∞-norm of an accepted step.
    pub tol_step: f64,
    /// Bound on the log-likelihood change, relative to `max(1, |ℓ|)`.
    pub tol_loglik: f64,
    /// Monte Carlo draws per covariate set.
    pub draws: usize,
    pub seed: u64,
    /// Polish the closed-form α̂ by the exact 1-D maximiser.
    pub polish_alpha: bool,
    /// Iterations between Fisher refreshes in the stochastic variant.
    pub fisher_refresh: usize,
    /// Trailing window of the stochastic slope test.
    pub slope_window: usize,
    /// Objective evaluation budget for Nelder–Mead.
    pub max_evals: usize,
    /// Unconstrained starting point; the model heuristic when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::NaturalGradient,
            step_size: 1.0,
            max_iter: 1000,
            tol_step: 1e-6,
            tol_loglik: 1e-8,
            draws: 4096,
            seed: 0,
            polish_alpha: true,
            fisher_refresh: 10,
            slope_window: 50,
            max_evals: 20_000,
            start: None,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.into()));
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.tol_step > 0.0 && self.tol_loglik > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iter == 0 || self.draws == 0 || self.fisher_refresh == 0 || self.slope_window < 3 {
            return bad("iteration, draw, refresh and window counts must be positive (window ≥ 3)");
        }
        Ok(())
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo::new(self.draws, self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Zero natural-gradient direction.
    Stationary,
    StepTolerance,
    /// Several consecutive accepted steps changed the likelihood by less
    /// than the tolerance.
    LoglikTolerance,
    /// No step length along the ascent direction improved the likelihood.
    LineSearchExhausted,
    SlopeTest,
    SimplexConverged,
    MaxIterations,
}

/// Fitted probabilities for one covariate set next to the judgement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedCovariate {
    pub covariate: CovariateSet,
    pub partition: Partition,
    pub judged: Vec<f64>,
    pub fitted: BinProbabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub method: Method,
    pub lambda_hat: HyperParams,
    /// Concentration used in the likelihood at the optimum.
    pub alpha: f64,
    pub alpha_hat: ConcentrationEstimate,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub fitted: Vec<FittedCovariate>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// Some judgement had zero entries lifted to the floor.
    pub floored: bool,
    pub prior_summary: Vec<ParamSummary>,
    pub judgements_hash: String,
    pub config: OptimizerConfig,
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serialises")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub iteration: usize,
    pub loglik: f64,
    pub alpha: f64,
}

/// Cancellation flag and progress callback for long fits.
#[derive(Default, Clone, Copy)]
pub struct FitControl<'a> {
    pub cancel: Option<&'a AtomicBool>,
    pub progress: Option<&'a (dyn Fn(Progress) + Sync)>,
}

impl FitControl<'_> {
    pub(crate) fn check(&self) -> Result<()> {
        match self.cancel {
            Some(flag) if flag.load(Ordering::Relaxed) => Err(Error::Cancelled),
            _ => Ok(()),
        }
    }

    pub(crate) fn report(&self, iteration: usize, loglik: f64, alpha: f64) {
        if let Some(f) = self.progress {
            f(Progress { iteration, loglik, alpha });
        }
    }
}

/// Likelihood at one λ with α profiled out.
pub(crate) struct Profile {
    pub params: HyperParams,
    pub alpha: f64,
    pub loglik: f64,
    pub fitted: Vec<BinProbabilities>,
}

pub(crate) struct Problem<'a> {
    pub model: &'a dyn GenerativeModel,
    pub judgements: &'a JudgementSet,
    pub config: &'a OptimizerConfig,
}

impl Problem<'_> {
    pub fn probabilities(&self, params: &HyperParams, mc: &MonteCarlo, jac: bool) -> Result<Vec<BinProbabilities>> {
        fitted_probabilities(self.model, params, self.judgements, mc, jac)
    }

    /// α̂, then optionally the exact maximiser if it does at least as well.
    pub fn refresh_alpha(&self, fitted: &[BinProbabilities]) -> Result<(f64, f64)> {
        let est = alpha_hat_from(self.judgements, fitted)?;
        let mut alpha = est.alpha_hat;
        let mut ll = loglik_at(self.judgements, fitted, alpha)?;
        if self.config.polish_alpha {
            let a = alpha_mle(self.judgements, fitted)?;
            let l = loglik_at(self.judgements, fitted, a)?;
            if l >= ll {
                alpha = a;
                ll = l;
            }
        }
        Ok((alpha, ll))
    }

    pub fn profile(&self, params: HyperParams, mc: &MonteCarlo, jac: bool) -> Result<Profile> {
        let fitted = self.probabilities(&params, mc, jac)?;
        let (alpha, loglik) = self.refresh_alpha(&fitted)?;
        Ok(Profile { params, alpha, loglik, fitted })
    }
}

/// Output of an optimiser before packaging.
pub(crate) struct RawFit {
    pub params: HyperParams,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    pub converged: bool,
}

pub fn fit(judgements: &JudgementSet, model: &dyn GenerativeModel, config: &OptimizerConfig) -> Result<FitResult> {
    fit_with(judgements, model, config, FitControl::default())
}

pub fn fit_with(
    judgements: &JudgementSet,
    model: &dyn GenerativeModel,
    config: &OptimizerConfig,
    control: FitControl<'_>,
) -> Result<FitResult> {
    config.validate()?;
    let prepared = judgements.prepare(model)?;
    let start = match &config.start {
        Some(u) => HyperParams::from_unconstrained(model.layout(), u.clone())?,
        None => model.initial_params(&prepared)?,
    };
    let start = model.canonicalize(start);
    let problem = Problem { model, judgements: &prepared, config };
    let raw = match config.method {
        Method::NaturalGradient => natgrad::run(&problem, start, control)?,
        Method::StochasticNaturalGradient => stochastic::run(&problem, start, control)?,
        Method::NelderMead => nelder_mead::run(&problem, start, control)?,
    };
    let mc = config.monte_carlo();
    let last = problem.profile(raw.params, &mc, false)?;
    let alpha_hat = alpha_hat_from(&prepared, &last.fitted)?;
    let fitted = prepared
        .judgements
        .iter()
        .zip(last.fitted)
        .map(|(j, f)| FittedCovariate { covariate: j.covariate.clone(), partition: j.partition.clone(), judged: j.p.clone(), fitted: f })
        .collect();
    Ok(FitResult {
        model: model.name().into(),
        method: config.method,
        prior_summary: model.prior_summary(&last.params),
        lambda_hat: last.params,
        alpha: last.alpha,
        alpha_hat,
        loglik: last.loglik,
        loglik_trace: raw.trace,
        fitted,
        converged: raw.converged,
        stop_reason: raw.stop,
        iterations: raw.iterations,
        floored: prepared.any_floored(),
        judgements_hash: prepared.content_hash(),
        config: config.clone(),
    })
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
