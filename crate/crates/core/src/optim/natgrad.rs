//! Natural-gradient ascent with step halving. Monte Carlo models are
//! evaluated with a fixed seed, so the objective is deterministic.

use nalgebra::DVector;

use super::{inf_norm, FitControl, Problem, Profile, RawFit, StopReason};
use crate::error::Result;
use crate::fisher::{hyper_fisher, FisherSource};
use crate::likelihood::{gradient_at, loglik_at};
use crate::model::Backend;
use crate::params::HyperParams;

const MAX_HALVINGS: usize = 20;
/// Largest first trial step (∞-norm, unconstrained coordinates).
const MAX_STEP: f64 = 2.0;
/// Consecutive flat steps before stopping on the likelihood alone.
const PATIENCE: usize = 5;

pub(super) fn run(problem: &Problem<'_>, start: HyperParams, control: FitControl<'_>) -> Result<RawFit> {
    let cfg = problem.config;
    let mc = cfg.monte_carlo();
    let source = match problem.model.backend() {
        Backend::ClosedForm => FisherSource::ClosedForm,
        Backend::MonteCarlo => FisherSource::Stochastic,
    };
    let mut cur: Profile = problem.profile(start, &mc, true)?;
    let mut trace = vec![cur.loglik];
    control.report(0, cur.loglik, cur.alpha);

    let mut flat = 0;
    for it in 1..=cfg.max_iter {
        control.check()?;
        let grad = gradient_at(problem.judgements, std::mem::take(&mut cur.fitted), cur.alpha, cur.params.dof())?;
        let fisher = hyper_fisher(cur.alpha, &grad.fitted, source)?;
        let (dir, _) = fisher.solve(&grad.grad)?;
        if inf_norm(dir.as_slice()) == 0.0 {
            cur.fitted = grad.fitted;
            return Ok(RawFit { params: cur.params, trace, iterations: it - 1, stop: StopReason::Stationary, converged: true });
        }

        let mut eta = cfg.step_size.min(MAX_STEP / inf_norm(dir.as_slice()));
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            if let Some(next) = try_step(problem, &cur, &dir, eta, &mc) {
                accepted = Some(next);
                break;
            }
            eta *= 0.5;
        }
        let Some((next, step)) = accepted else {
            // Failing only at rounding level counts as convergence: the
            // predicted gain `gᵀ H⁻¹ g` is then negligible.
            let gain = grad.grad.dot(&dir);
            let converged = gain < cfg.tol_loglik.sqrt() * cur.loglik.abs().max(1.0);
            return Ok(RawFit { params: cur.params, trace, iterations: it - 1, stop: StopReason::LineSearchExhausted, converged });
        };

        let change = next.loglik - cur.loglik;
        let scale = next.loglik.abs().max(1.0);
        let fitted = problem.probabilities(&next.params, &mc, true)?;
        cur = Profile { fitted, ..next };
        trace.push(cur.loglik);
        control.report(it, cur.loglik, cur.alpha);
        let small = change.abs() < cfg.tol_loglik * scale;
        if step < cfg.tol_step && small {
            return Ok(RawFit { params: cur.params, trace, iterations: it, stop: StopReason::StepTolerance, converged: true });
        }
        flat = if small { flat + 1 } else { 0 };
        if flat == PATIENCE {
            return Ok(RawFit { params: cur.params, trace, iterations: it, stop: StopReason::LoglikTolerance, converged: true });
        }
    }
    Ok(RawFit { params: cur.params, trace, iterations: cfg.max_iter, stop: StopReason::MaxIterations, converged: false })
}

/// Candidate `λ + η Δ` with α refreshed, accepted when the likelihood does
/// not decrease. Returns the profile and the step's ∞-norm.
fn try_step(
    problem: &Problem<'_>,
    cur: &Profile,
    dir: &DVector<f64>,
    eta: f64,
    mc: &crate::model::MonteCarlo,
) -> Option<(Profile, f64)> {
    let u: Vec<f64> = cur.params.unconstrained.iter().zip(dir.iter()).map(|(x, d)| x + eta * d).collect();
    let params = problem.model.canonicalize(cur.params.with_unconstrained(u).ok()?);
    let fitted = problem.probabilities(&params, mc, false).ok()?;
    // Likelihood at the old α first: the refresh can only raise it.
    let at_old = loglik_at(problem.judgements, &fitted, cur.alpha).ok()?;
    let (alpha, loglik) = match problem.refresh_alpha(&fitted) {
        Ok((a, l)) if l >= at_old => (a, l),
        _ => (cur.alpha, at_old),
    };
    if !(loglik.is_finite() && loglik >= cur.loglik) {
        return None;
    }
    let step = eta * inf_norm(dir.as_slice());
    Some((Profile { params, alpha, loglik, fitted }, step))
}
