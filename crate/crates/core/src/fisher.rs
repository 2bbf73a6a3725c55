//! Fisher information of the Dirichlet judgement model and its pull-back
//! to the hyperparameters, plus the jittered SPD solve used for natural
//! gradient steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::P_FLOOR;
use crate::model::BinProbabilities;
use crate::special::trigamma;

/// First jitter tried when the Fisher matrix is not numerically SPD.
pub const JITTER_START: f64 = 1e-8;
/// Largest jitter before giving up.
pub const JITTER_MAX: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherSource {
    ClosedForm,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub source: FisherSource,
}

/// `H_P = α² (diag ψ′(αP) − ψ′(α) 𝟙𝟙ᵀ)`.
pub fn dirichlet_fisher(alpha: f64, probs: &[f64]) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    if probs.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::NonInteriorP);
    }
    Ok(fisher_unchecked(alpha, probs))
}

fn fisher_unchecked(alpha: f64, probs: &[f64]) -> DMatrix<f64> {
    let n = probs.len();
    let a2 = alpha * alpha;
    let off = a2 * trigamma(alpha);
    let mut h = DMatrix::from_element(n, n, -off);
    for i in 0..n {
        h[(i, i)] += a2 * trigamma(alpha * probs[i].clamp(P_FLOOR, 1.0));
    }
    h
}

/// `H_λ = Σ_j J_jᵀ H_{P_j} J_j`, with `J_j` the jacobians of the fitted
/// probabilities in unconstrained coordinates.
pub fn hyper_fisher(alpha: f64, fitted: &[BinProbabilities], source: FisherSource) -> Result<FisherMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    let mut total: Option<DMatrix<f64>> = None;
    for f in fitted {
        let j = f.jacobian.as_ref().ok_or(Error::JacobianUnavailable)?;
        let h = fisher_unchecked(alpha, &f.values);
        let term = j.transpose() * h * j;
        total = Some(match total {
            None => term,
            Some(t) => t + term,
        });
    }
    let mut matrix = total.ok_or(Error::NoJudgements)?;
    // Remove rounding asymmetry.
    let t = matrix.transpose();
    matrix = (&matrix + t) * 0.5;
    Ok(FisherMatrix { matrix, source })
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigenvalues().min()
    }

    /// Solves `H x = g`, adding `δ·(tr H / M)·I` with δ escalating from
    /// [`JITTER_START`] to [`JITTER_MAX`] until a Cholesky factor exists.
    /// Returns the solution and the δ used (zero when none was needed).
    pub fn solve(&self, g: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        spd_solve(&self.matrix, g)
    }
}

pub fn spd_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let m = h.nrows();
    if m != g.len() {
        return Err(Error::DimensionMismatch { expected: m, found: g.len() });
    }
    if m == 0 {
        return Ok((DVector::zeros(0), 0.0));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFisher(f64::NAN));
    }
    let scale = (h.trace() / m as f64).abs().max(f64::MIN_POSITIVE);
    if let Some(c) = h.clone().cholesky() {
        return Ok((c.solve(g), 0.0));
    }
    let mut delta = JITTER_START;
    while delta <= JITTER_MAX * (1.0 + 1e-12) {
        let mut hj = h.clone();
        for i in 0..m {
            hj[(i, i)] += delta * scale;
        }
        if let Some(c) = hj.cholesky() {
            return Ok((c.solve(g), delta));
        }
        delta *= 10.0;
    }
    Err(Error::SingularFisher(JITTER_MAX))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{dirichlet_score, sample_dirichlet};
    use crate::model::{CovariateSet, GenerativeModel, MonteCarlo};
    use crate::models::{GaussianMixtureModel, ProbitGlmModel};
    use crate::partition::Partition;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    #[test]
    fn two_bin_entries() {
        let h = dirichlet_fisher(2.0, &[0.5, 0.5]).unwrap();
        assert!((h[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((h[(0, 1)] + 4.0 * (PI * PI / 6.0 - 1.0)).abs() < 1e-12);
        assert!((h[(0, 1)] + 2.5797).abs() < 1e-4);
    }

    /// Trigamma by direct summation of `Σ 1/(x+k)²` with an integral tail.
    fn trigamma_oracle(x: f64) -> f64 {
        let n = 200_000;
        let s: f64 = (0..n).map(|k| 1.0 / (x + k as f64).powi(2)).sum();
        let t = x + n as f64;
        s + 1.0 / t + 1.0 / (2.0 * t * t) + 1.0 / (6.0 * t * t * t)
    }

    #[test]
    fn entries_match_oracle() {
        let p = [0.2, 0.3, 0.5];
        let h = dirichlet_fisher(10.0, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut v = -100.0 * trigamma_oracle(10.0);
                if i == j {
                    v += 100.0 * trigamma_oracle(10.0 * p[i]);
                }
                assert!((h[(i, j)] - v).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn fisher_is_score_covariance_on_tangent_directions() {
        // The score in P is only defined up to 𝟙, so compare quadratic forms
        // along zero-sum directions.
        let p = [0.2, 0.3, 0.5];
        let alpha = 6.0;
        let h = dirichlet_fisher(alpha, &p).unwrap();
        let v = DVector::from_vec(vec![1.0, -0.4, -0.6]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_dirichlet(alpha, &p, &mut rng).unwrap();
            let sc = DVector::from_vec(dirichlet_score(&x, alpha, &p).unwrap());
            let d = sc.dot(&v);
            s += d;
            s2 += d * d;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        let exact = (v.transpose() * &h * &v)[(0, 0)];
        assert!((var - exact).abs() < 0.02 * exact, "{var} vs {exact}");
    }

    #[test]
    fn mixture_fisher_is_positive_definite() {
        let m = GaussianMixtureModel::new(2);
        let p = m.params(&[-2.0, 2.0], 1.0, &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let mut e = vec![f64::NEG_INFINITY];
        e.extend((-4..=4).map(|v| v as f64));
        e.push(f64::INFINITY);
        let b = m.bin_probabilities(&p, &CovariateSet::empty(), &Partition::from_edges(&e), true, &MonteCarlo::default()).unwrap();
        let f = hyper_fisher(50.0, &[b], FisherSource::ClosedForm).unwrap();
        assert!(f.min_eigenvalue() >= -1e-8 * f.matrix.norm());
        let mut jittered = f.matrix.clone();
        for i in 0..f.dim() {
            jittered[(i, i)] += 1e-8;
        }
        assert!(jittered.cholesky().is_some());
        for i in 0..f.dim() {
            for j in 0..f.dim() {
                assert!((f.matrix[(i, j)] - f.matrix[(j, i)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn probit_fisher_is_additive() {
        let m = ProbitGlmModel::new(2);
        let p = m.params(&[0.3, -0.5], &[1.2, 0.6], &DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0])).unwrap();
        let part = Partition::atoms_1d(&[0.0, 1.0]);
        let xs = [[1.0, 0.3], [-0.5, 2.0], [0.7, -1.1], [1.5, 1.5], [-2.0, 0.1]];
        let fitted: Vec<BinProbabilities> = xs
            .iter()
            .map(|x| m.bin_probabilities(&p, &CovariateSet::new(x.to_vec(), ""), &part, true, &MonteCarlo::default()).unwrap())
            .collect();
        let total = hyper_fisher(20.0, &fitted, FisherSource::ClosedForm).unwrap().matrix;
        let mut sum = DMatrix::zeros(5, 5);
        for f in &fitted {
            let j = f.jacobian.as_ref().unwrap();
            let h = dirichlet_fisher(20.0, &f.values).unwrap();
            for a in 0..5 {
                for b in 0..5 {
                    let mut v = 0.0;
                    for r in 0..2 {
                        for c in 0..2 {
                            v += j[(r, a)] * h[(r, c)] * j[(c, b)];
                        }
                    }
                    sum[(a, b)] += v;
                }
            }
        }
        assert!((total - sum).norm() < 1e-9);
    }

    #[test]
    fn identity_metric_returns_gradient() {
        let g = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let (x, d) = spd_solve(&DMatrix::identity(3, 3), &g).unwrap();
        assert_eq!(x, g);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn jitter_escalates_then_fails() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, d) = spd_solve(&singular, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(d >= JITTER_START);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(spd_solve(&indefinite, &DVector::from_vec(vec![1.0, 1.0])), Err(Error::SingularFisher(_))));
    }
}
