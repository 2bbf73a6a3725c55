//! Stochastic natural gradient: fresh Monte Carlo draws every iteration,
//! a Fisher matrix refreshed every few iterations, a decaying step size and
//! Polyak averaging of the trailing iterates.

use nalgebra::DVector;

use super::{inf_norm, FitControl, Problem, RawFit, StopReason};
use crate::error::Result;
use crate::fisher::{hyper_fisher, FisherMatrix, FisherSource};
use crate::likelihood::gradient_at;
use crate::model::{Backend, MonteCarlo};
use crate::params::HyperParams;
use crate::rng::derive_seed;

/// Largest ∞-norm of a single update, guarding against noisy directions.
const MAX_STEP: f64 = 1.0;

pub(super) fn run(problem: &Problem<'_>, start: HyperParams, control: FitControl<'_>) -> Result<RawFit> {
    let cfg = problem.config;
    let source = match problem.model.backend() {
        Backend::ClosedForm => FisherSource::ClosedForm,
        Backend::MonteCarlo => FisherSource::Stochastic,
    };
    let window = cfg.slope_window;
    let mut params = start;
    let mut fisher: Option<FisherMatrix> = None;
    let mut trace = Vec::new();
    let mut iterates: Vec<Vec<f64>> = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut iterations = cfg.max_iter;

    for t in 0..cfg.max_iter {
        control.check()?;
        let mc = MonteCarlo::new(cfg.draws, derive_seed(cfg.seed, t as u64 + 1));
        let fitted = problem.probabilities(&params, &mc, true)?;
        let (alpha, loglik) = problem.refresh_alpha(&fitted)?;
        trace.push(loglik);
        control.report(t, loglik, alpha);
        let grad = gradient_at(problem.judgements, fitted, alpha, params.dof())?;
        if t % cfg.fisher_refresh == 0 || fisher.is_none() {
            fisher = Some(hyper_fisher(alpha, &grad.fitted, source)?);
        }
        let (mut dir, _) = fisher.as_ref().expect("set above").solve(&grad.grad)?;
        let eta = cfg.step_size / (1.0 + t as f64 / 100.0);
        dir *= eta;
        let size = inf_norm(dir.as_slice());
        if size > MAX_STEP {
            dir *= MAX_STEP / size;
        }
        let u = DVector::from_column_slice(&params.unconstrained) + dir;
        params = problem.model.canonicalize(params.with_unconstrained(u.as_slice().to_vec())?);
        iterates.push(params.unconstrained.clone());
        if iterates.len() > window {
            iterates.remove(0);
        }
        if trace.len() >= window && flat(&trace[trace.len() - window..]) {
            stop = StopReason::SlopeTest;
            iterations = t + 1;
            break;
        }
    }

    let m = params.dof();
    let mut avg = vec![0.0; m];
    for x in &iterates {
        for (a, v) in avg.iter_mut().zip(x) {
            *a += v / iterates.len() as f64;
        }
    }
    let params = problem.model.canonicalize(params.with_unconstrained(avg)?);
    let converged = stop == StopReason::SlopeTest;
    Ok(RawFit { params, trace, iterations, stop, converged })
}

/// Least-squares slope of the trailing log-likelihoods is within two
/// standard errors of zero and the total drift it implies is below the
/// residual spread.
fn flat(y: &[f64]) -> bool {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let rss: f64 = y.iter().enumerate().map(|(i, v)| (v - ym - slope * (i as f64 - xm)).powi(2)).sum();
    let sigma = (rss / (n - 2.0)).sqrt();
    let se = sigma / sxx.sqrt();
    slope.abs() <= 2.0 * se && slope.abs() * n <= sigma.max(1e-12 * ym.abs())
}
