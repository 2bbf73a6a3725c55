//! Derivative-free fitting: Nelder–Mead on the profile likelihood
//! `max_α ℓ(λ, α)` in unconstrained coordinates, with one restart.

use super::{FitControl, Problem, RawFit, StopReason};
use crate::error::Result;
use crate::params::HyperParams;

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadOptions {
    /// Edge length of the initial axis-aligned simplex.
    pub scale: f64,
    /// Spread of function values, relative to `1 + |f_best|`.
    pub f_tol: f64,
    /// Largest vertex distance (∞-norm) from the best vertex.
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { scale: 0.5, f_tol: 1e-10, x_tol: 1e-7, max_evals: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

/// Minimises `f`. Non-finite values are treated as `+∞`. The callback
/// may abort the search by returning an error.
pub fn nelder_mead<F>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += opts.scale;
        pts.push(p);
    }
    let mut vals = Vec::with_capacity(n + 1);
    for p in &pts {
        vals.push(eval(p, &mut evals)?);
    }
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = n == 0;

    while !converged && evals < opts.max_evals {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread <= opts.f_tol * (1.0 + vals[0].abs()) && size <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals)?;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    vals[i] = eval(&shrunk, &mut evals)?;
                    pts[i] = shrunk;
                }
            }
        }
        trace.push(vals.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Ok(NelderMeadResult { x: pts[best].clone(), f: vals[best], evals, iterations, converged, trace })
}

pub(super) fn run(problem: &Problem<'_>, start: HyperParams, control: FitControl<'_>) -> Result<RawFit> {
    let cfg = problem.config;
    let mc = cfg.monte_carlo();
    let mut iteration = 0usize;
    let mut objective = |u: &[f64]| -> Result<f64> {
        control.check()?;
        let Ok(params) = start.with_unconstrained(u.to_vec()) else {
            return Ok(f64::INFINITY);
        };
        let params = problem.model.canonicalize(params);
        iteration += 1;
        match problem.profile(params, &mc, false) {
            Ok(p) => {
                control.report(iteration, p.loglik, p.alpha);
                Ok(-p.loglik)
            }
            Err(crate::Error::Cancelled) => Err(crate::Error::Cancelled),
            Err(_) => Ok(f64::INFINITY),
        }
    };

    let first_opts = NelderMeadOptions { max_evals: cfg.max_evals, ..NelderMeadOptions::default() };
    let first = nelder_mead(&mut objective, &start.unconstrained, &first_opts)?;
    let second_opts = NelderMeadOptions { scale: 0.1, max_evals: cfg.max_evals.saturating_sub(first.evals).max(1), ..first_opts };
    let second = nelder_mead(&mut objective, &first.x, &second_opts)?;

    let (x, converged) = if second.f <= first.f { (second.x, second.converged) } else { (first.x, first.converged) };
    let mut trace: Vec<f64> = first.trace.iter().chain(&second.trace).map(|v| -v).collect();
    // The restart's trace continues from its own simplex; keep the record
    // of the best value seen so far.
    for i in 1..trace.len() {
        trace[i] = trace[i].max(trace[i - 1]);
    }
    let params = problem.model.canonicalize(start.with_unconstrained(x)?);
    let stop = if converged { StopReason::SimplexConverged } else { StopReason::MaxIterations };
    Ok(RawFit { params, trace, iterations: first.iterations + second.iterations, stop, converged })
}
