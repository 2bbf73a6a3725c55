//! Dirichlet judgement likelihood `p_j ~ D(α, P_j(λ))`, its derivatives,
//! the closed-form concentration estimate α̂ and the exact 1-D α-MLE.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgement::{Judgement, JudgementSet};
use crate::model::{bin_probabilities, BinProbabilities, CovariateSet, GenerativeModel, MonteCarlo};
use crate::params::HyperParams;
use crate::partition::Partition;
use crate::rng::stream;
use crate::special::{digamma, ln_gamma};

/// Upper limit reported for α̂ when the divergence vanishes.
pub const ALPHA_MAX: f64 = 1e8;
/// Lower limit of the α search.
pub const ALPHA_MIN: f64 = 1e-3;
/// Floor on model probabilities entering `Γ(αP)`.
pub const P_FLOOR: f64 = 1e-12;

fn floored(v: f64) -> f64 {
    v.clamp(P_FLOOR, 1.0)
}

fn check_interior(p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(v > 0.0 && v < 1.0 + 1e-12)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::NotOnSimplex(format!("{p:?}")));
    }
    Ok(())
}

fn check_pair(p: &[f64], alpha: f64, probs: &[f64]) -> Result<()> {
    if p.len() != probs.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: probs.len() });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    check_interior(p)
}

/// `ln Γ(α) − Σ ln Γ(αP_i) + Σ (αP_i − 1) ln p_i`.
pub fn dirichlet_logpdf(p: &[f64], alpha: f64, probs: &[f64]) -> Result<f64> {
    check_pair(p, alpha, probs)?;
    let mut out = ln_gamma(alpha);
    for (&pi, &qi) in p.iter().zip(probs) {
        let a = alpha * floored(qi);
        out += (a - 1.0) * pi.ln() - ln_gamma(a);
    }
    Ok(out)
}

/// `∂/∂P_i` of the log-density: `α (ln p_i − ψ(αP_i))`.
pub fn dirichlet_score(p: &[f64], alpha: f64, probs: &[f64]) -> Result<Vec<f64>> {
    check_pair(p, alpha, probs)?;
    Ok(p.iter().zip(probs).map(|(&pi, &qi)| alpha * (pi.ln() - digamma(alpha * floored(qi)))).collect())
}

/// `∂/∂α` of the log-density: `ψ(α) − Σ P_i ψ(αP_i) + Σ P_i ln p_i`.
pub fn dirichlet_dalpha(p: &[f64], alpha: f64, probs: &[f64]) -> Result<f64> {
    check_pair(p, alpha, probs)?;
    let mut out = digamma(alpha);
    for (&pi, &qi) in p.iter().zip(probs) {
        let q = floored(qi);
        out += q * (pi.ln() - digamma(alpha * q));
    }
    Ok(out)
}

/// `Σ P_i ln(P_i / p_i)` with `0 ln 0 = 0`.
pub fn kl_divergence(probs: &[f64], p: &[f64]) -> Result<f64> {
    if probs.len() != p.len() {
        return Err(Error::LengthMismatch { left: probs.len(), right: p.len() });
    }
    let mut out = 0.0;
    for (&q, &pi) in probs.iter().zip(p) {
        if q > 0.0 {
            if !(pi > 0.0) {
                return Err(Error::NotOnSimplex(format!("{p:?}")));
            }
            out += q * (q / pi).ln();
        }
    }
    Ok(out.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub alpha_hat: f64,
    pub kl_total: f64,
    pub capped: bool,
}

impl ConcentrationEstimate {
    /// `α̂ = (Σ n_j/2 − J/2) / Σ KL`, capped at [`ALPHA_MAX`].
    pub fn from_divergences(sizes: &[usize], kls: &[f64]) -> Result<Self> {
        let numerator: f64 = sizes.iter().map(|&n| n as f64 / 2.0).sum::<f64>() - sizes.len() as f64 / 2.0;
        if !(numerator > 0.0) {
            return Err(Error::DegenerateJudgement);
        }
        let kl_total: f64 = kls.iter().sum();
        if kl_total <= numerator / ALPHA_MAX {
            return Ok(Self { alpha_hat: ALPHA_MAX, kl_total, capped: true });
        }
        Ok(Self { alpha_hat: numerator / kl_total, kl_total, capped: false })
    }
}

/// Model probabilities for every judgement, evaluated in parallel and
/// returned in judgement order.
pub fn fitted_probabilities(
    model: &dyn GenerativeModel,
    params: &HyperParams,
    judgements: &JudgementSet,
    mc: &MonteCarlo,
    want_jacobian: bool,
) -> Result<Vec<BinProbabilities>> {
    judgements
        .judgements
        .par_iter()
        .enumerate()
        .map(|(j, jd)| bin_probabilities(model, params, &jd.covariate, &jd.partition, want_jacobian, &mc.for_covariate(j)))
        .collect()
}

pub fn alpha_hat_from(judgements: &JudgementSet, fitted: &[BinProbabilities]) -> Result<ConcentrationEstimate> {
    let sizes: Vec<usize> = judgements.judgements.iter().map(Judgement::n).collect();
    let kls = judgements
        .judgements
        .iter()
        .zip(fitted)
        .map(|(j, f)| kl_divergence(&f.values, &j.p))
        .collect::<Result<Vec<_>>>()?;
    ConcentrationEstimate::from_divergences(&sizes, &kls)
}

pub fn alpha_hat(
    judgements: &JudgementSet,
    params: &HyperParams,
    model: &dyn GenerativeModel,
    mc: &MonteCarlo,
) -> Result<ConcentrationEstimate> {
    alpha_hat_from(judgements, &fitted_probabilities(model, params, judgements, mc, false)?)
}

/// Joint log-likelihood at fixed model probabilities.
pub fn loglik_at(judgements: &JudgementSet, fitted: &[BinProbabilities], alpha: f64) -> Result<f64> {
    judgements
        .judgements
        .iter()
        .zip(fitted)
        .map(|(j, f)| dirichlet_logpdf(&j.p, alpha, &f.values))
        .sum()
}

pub fn joint_loglik(
    judgements: &JudgementSet,
    alpha: f64,
    params: &HyperParams,
    model: &dyn GenerativeModel,
    mc: &MonteCarlo,
) -> Result<f64> {
    loglik_at(judgements, &fitted_probabilities(model, params, judgements, mc, false)?, alpha)
}

/// Log-likelihood with its gradient in the unconstrained hyperparameters
/// and its α-derivative.
#[derive(Clone, Debug)]
pub struct LoglikGradient {
    pub value: f64,
    pub grad: DVector<f64>,
    pub dalpha: f64,
    pub fitted: Vec<BinProbabilities>,
}

pub fn joint_loglik_grad(
    judgements: &JudgementSet,
    alpha: f64,
    params: &HyperParams,
    model: &dyn GenerativeModel,
    mc: &MonteCarlo,
) -> Result<LoglikGradient> {
    let fitted = fitted_probabilities(model, params, judgements, mc, true)?;
    gradient_at(judgements, fitted, alpha, params.dof())
}

/// Gradient from probabilities that already carry their jacobians.
pub fn gradient_at(judgements: &JudgementSet, fitted: Vec<BinProbabilities>, alpha: f64, dof: usize) -> Result<LoglikGradient> {
    let mut value = 0.0;
    let mut grad = DVector::zeros(dof);
    let mut dalpha = 0.0;
    for (j, f) in judgements.judgements.iter().zip(&fitted) {
        value += dirichlet_logpdf(&j.p, alpha, &f.values)?;
        dalpha += dirichlet_dalpha(&j.p, alpha, &f.values)?;
        let score = DVector::from_vec(dirichlet_score(&j.p, alpha, &f.values)?);
        let jac = f.jacobian.as_ref().ok_or(Error::JacobianUnavailable)?;
        grad += jac.transpose() * score;
    }
    Ok(LoglikGradient { value, grad, dalpha, fitted })
}

/// Exact maximiser of `Σ_j ln D(p_j; α, P_j)` over α by golden-section
/// search in `ln α` on `[ALPHA_MIN, ALPHA_MAX]`.
pub fn alpha_mle(judgements: &JudgementSet, fitted: &[BinProbabilities]) -> Result<f64> {
    let f = |la: f64| loglik_at(judgements, fitted, la.exp());
    let (mut a, mut b) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// One draw from `D(α, P)`. Gamma variates are generated on the log scale
/// (`ln G = ln G' + ln U / a` with `G' ~ Gamma(a + 1)`) so tiny shapes do
/// not underflow before normalisation.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, probs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    let logs = probs
        .iter()
        .map(|&q| {
            let a = alpha * floored(q);
            let g: f64 = Gamma::new(a + 1.0, 1.0).map_err(|e| Error::InvalidParams(e.to_string()))?.sample(rng);
            let u: f64 = rng.random::<f64>();
            Ok(g.ln() + u.max(f64::MIN_POSITIVE).ln() / a)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Synthetic judgements `p_j ~ D(α, P_j(λ))`, one stream per covariate set.
pub fn sample_judgements(
    alpha: f64,
    params: &HyperParams,
    model: &dyn GenerativeModel,
    design: &[(CovariateSet, Partition)],
    seed: u64,
    mc: &MonteCarlo,
) -> Result<JudgementSet> {
    let judgements = design
        .iter()
        .enumerate()
        .map(|(j, (x, part))| {
            let probs = bin_probabilities(model, params, x, part, false, &mc.for_covariate(j))?;
            let p = sample_dirichlet(alpha, &probs.values, &mut stream(seed, j as u64))?;
            Judgement::new(x.clone(), part.clone(), p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JudgementSet { expert: "synthetic".into(), timestamp: None, judgements })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMixtureModel;
    use rand::SeedableRng;

    /// Stirling series for ln Γ, shifted up by recurrence; independent of
    /// the library routine.
    fn ln_gamma_oracle(x: f64) -> f64 {
        let mut x = x;
        let mut shift = 0.0;
        while x < 30.0 {
            shift -= x.ln();
            x += 1.0;
        }
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    }

    fn fig1_probs() -> Vec<f64> {
        let m = GaussianMixtureModel::new(2);
        let p = m.params(&[-2.0, 2.0], 1.0, &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let mut e = vec![f64::NEG_INFINITY];
        e.extend((-4..=4).map(|v| v as f64));
        e.push(f64::INFINITY);
        m.bin_probabilities(&p, &CovariateSet::empty(), &Partition::from_edges(&e), false, &MonteCarlo::default())
            .unwrap()
            .values
    }

    #[test]
    fn flat_exponents_give_normaliser() {
        let third = 1.0 / 3.0;
        let v = dirichlet_logpdf(&[0.2, 0.3, 0.5], 3.0, &[third, third, third]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        let v = dirichlet_logpdf(&[0.3, 0.7], 2.0, &[0.5, 0.5]).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn matches_series_oracle() {
        let probs = fig1_probs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p = sample_dirichlet(50.0, &probs, &mut rng).unwrap();
        let mut oracle = ln_gamma_oracle(50.0);
        for (&pi, &q) in p.iter().zip(&probs) {
            oracle += (50.0 * q - 1.0) * pi.ln() - ln_gamma_oracle(50.0 * q);
        }
        let v = dirichlet_logpdf(&p, 50.0, &probs).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(dirichlet_logpdf(&[0.5, 0.5], 0.0, &[0.5, 0.5]), Err(Error::NonPositiveAlpha(_))));
        assert!(matches!(dirichlet_logpdf(&[1.0, 0.0], 2.0, &[0.5, 0.5]), Err(Error::NotOnSimplex(_))));
        assert!(matches!(kl_divergence(&[0.5, 0.5], &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_divergence(&[0.25, 0.25, 0.5], &[0.25, 0.25, 0.5]).unwrap(), 0.0);
        let third = 1.0 / 3.0;
        let v = kl_divergence(&[third, third, third], &[0.5, 0.25, 0.25]).unwrap();
        let exact = third * (2.0f64 / 3.0).ln() + 2.0 * third * (4.0f64 / 3.0).ln();
        assert!((v - exact).abs() < 1e-15);
        assert!((v - 0.05663).abs() < 1e-5);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn alpha_hat_plug_in() {
        let third = 1.0 / 3.0;
        let kl = kl_divergence(&[third, third, third], &[0.5, 0.25, 0.25]).unwrap();
        let est = ConcentrationEstimate::from_divergences(&[3], &[kl]).unwrap();
        assert!((est.alpha_hat - 17.66).abs() < 0.01);
        assert!(!est.capped);
        let capped = ConcentrationEstimate::from_divergences(&[3, 4], &[0.0, 0.0]).unwrap();
        assert!(capped.capped && capped.alpha_hat == ALPHA_MAX);
        assert!(matches!(ConcentrationEstimate::from_divergences(&[1, 1], &[0.1, 0.1]), Err(Error::DegenerateJudgement)));
    }

    #[test]
    fn score_and_dalpha_match_differences() {
        let probs = [0.2, 0.3, 0.5];
        let p = [0.25, 0.35, 0.4];
        let alpha = 7.0;
        let s = dirichlet_score(&p, alpha, &probs).unwrap();
        let h = 1e-6;
        // Moving along a zero-sum direction keeps P on the simplex.
        let dir = [1.0, -1.0, 0.0];
        let up: Vec<f64> = probs.iter().zip(dir).map(|(q, d)| q + h * d).collect();
        let dn: Vec<f64> = probs.iter().zip(dir).map(|(q, d)| q - h * d).collect();
        let fd = (dirichlet_logpdf(&p, alpha, &up).unwrap() - dirichlet_logpdf(&p, alpha, &dn).unwrap()) / (2.0 * h);
        assert!((fd - (s[0] - s[1])).abs() < 1e-6);
        let da = dirichlet_dalpha(&p, alpha, &probs).unwrap();
        let fd = (dirichlet_logpdf(&p, alpha + h, &probs).unwrap() - dirichlet_logpdf(&p, alpha - h, &probs).unwrap()) / (2.0 * h);
        assert!((fd - da).abs() < 1e-6);
    }

    #[test]
    fn huge_alpha_reproduces_probabilities() {
        let probs = fig1_probs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let p = sample_dirichlet(1e8, &probs, &mut rng).unwrap();
        for (a, b) in p.iter().zip(&probs) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn beta_marginal_mean() {
        let probs = [0.3, 0.7];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_dirichlet(5.0, &probs, &mut rng).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (0.3 * 0.7 / 6.0f64).sqrt();
        assert!((mean - 0.3).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn golden_section_finds_stationary_point() {
        let probs = fig1_probs();
        let m = GaussianMixtureModel::new(2);
        let lam = m.params(&[-2.0, 2.0], 1.0, &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let mut e = vec![f64::NEG_INFINITY];
        e.extend((-4..=4).map(|v| v as f64));
        e.push(f64::INFINITY);
        let design = vec![(CovariateSet::empty(), Partition::from_edges(&e)); 3];
        let js = sample_judgements(40.0, &lam, &m, &design, 12, &MonteCarlo::default()).unwrap();
        let fitted: Vec<BinProbabilities> = (0..3).map(|_| BinProbabilities { values: probs.clone(), ..Default::default() }).collect();
        let a = alpha_mle(&js, &fitted).unwrap();
        let slope: f64 = js.judgements.iter().map(|j| dirichlet_dalpha(&j.p, a, &probs).unwrap()).sum();
        assert!(slope.abs() < 1e-6 * a.max(1.0), "slope {slope} at {a}");
        assert!(a > 10.0 && a < 160.0);
    }
}
