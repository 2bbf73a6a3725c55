//! Probit-Bernoulli regression with a multivariate normal prior
//! `θ ~ N(μ, Σ)`, `Σ = diag(σ) R diag(σ)`. The prior predictive success
//! probability is `p(x) = Φ(xᵀμ / √(1 + xᵀΣx))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::judgement::JudgementSet;
use crate::model::{Backend, BinProbabilities, CovariateSet, GenerativeModel, MonteCarlo, PredictiveCurve};
use crate::params::{correlation_matrix, HyperParams, ParamBlock, ParamLayout, TransformKind};
use crate::partition::{Partition, SampleSpace};
use crate::special::{norm_cdf, norm_pdf};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbitGlmModel {
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbitParams {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
    pub corr: DMatrix<f64>,
}

impl ProbitParams {
    pub fn covariance(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&self.sd);
        &s * &self.corr * &s
    }
}

/// Success probability with its derivatives in constrained coordinates
/// (`μ`, `σ²`, strictly-lower `R`).
#[derive(Clone, Debug)]
pub struct SuccessProbability {
    pub p: f64,
    /// `1 − p`, evaluated on its own tail.
    pub q: f64,
    pub gradient: Option<Vec<f64>>,
}

impl ProbitGlmModel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// Hyperparameter count `2D + D(D−1)/2`.
    pub fn dof(&self) -> usize {
        2 * self.dim + self.dim * (self.dim - 1) / 2
    }

    pub fn params(&self, mean: &[f64], variances: &[f64], corr: &DMatrix<f64>) -> Result<HyperParams> {
        let d = self.dim;
        if mean.len() != d || variances.len() != d || corr.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mean.len() });
        }
        let mut c = mean.to_vec();
        c.extend_from_slice(variances);
        for i in 1..d {
            for j in 0..i {
                c.push(corr[(i, j)]);
            }
        }
        HyperParams::from_constrained(self.layout(), c)
    }

    pub fn unpack(&self, params: &HyperParams) -> Result<ProbitParams> {
        let d = self.dim;
        let c = &params.constrained;
        if c.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), found: c.len() });
        }
        if let Some(&v) = c[d..2 * d].iter().find(|v| !(**v > 0.0)) {
            return Err(Error::NonPositiveVariance(v));
        }
        Ok(ProbitParams {
            mean: DVector::from_column_slice(&c[..d]),
            sd: DVector::from_iterator(d, c[d..2 * d].iter().map(|v| v.sqrt())),
            corr: correlation_matrix(d, &c[2 * d..]),
        })
    }

    pub fn success_probability(&self, params: &ProbitParams, x: &[f64], want: bool) -> Result<SuccessProbability> {
        let d = self.dim;
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let xv = DVector::from_column_slice(x);
        let m = xv.dot(&params.mean);
        // u_a = Σ_b R_ab σ_b x_b
        let sx = params.sd.component_mul(&xv);
        let u = &params.corr * &sx;
        let quad = sx.dot(&u);
        let denom = (1.0 + quad).sqrt();
        let g = m / denom;
        let (p, q) = (norm_cdf(g), norm_cdf(-g));
        let gradient = want.then(|| {
            let phi = norm_pdf(g);
            let dg_dq = -0.5 * m / (denom * denom * denom);
            let mut grad = Vec::with_capacity(self.dof());
            grad.extend((0..d).map(|a| phi * x[a] / denom));
            grad.extend((0..d).map(|a| phi * dg_dq * x[a] * u[a] / params.sd[a]));
            for a in 1..d {
                for b in 0..a {
                    grad.push(phi * dg_dq * 2.0 * sx[a] * sx[b]);
                }
            }
            grad
        });
        Ok(SuccessProbability { p, q, gradient })
    }

    /// Mapping from the canonical atom order `{0}, {1}` onto the partition.
    fn atom_outcomes(partition: &Partition) -> Result<Vec<bool>> {
        match partition {
            Partition::Atoms { atoms } => atoms
                .iter()
                .enumerate()
                .map(|(i, a)| match a.as_slice() {
                    [v] if *v == 0.0 => Ok(false),
                    [v] if *v == 1.0 => Ok(true),
                    _ => Err(Error::OutsideSampleSpace { index: i }),
                })
                .collect(),
            Partition::Bins { .. } => Err(Error::SpaceMismatch("binary outcome needs atoms {0} and {1}".into())),
        }
    }
}

impl GenerativeModel for ProbitGlmModel {
    fn name(&self) -> &'static str {
        "probit-glm"
    }

    fn layout(&self) -> ParamLayout {
        let mut blocks = vec![
            ParamBlock::new("mu", TransformKind::Identity, self.dim),
            ParamBlock::new("sigma2", TransformKind::Log, self.dim),
        ];
        if self.dim > 1 {
            blocks.push(ParamBlock::new("R", TransformKind::CorrelationCholesky, self.dim));
        }
        ParamLayout::new(blocks)
    }

    fn backend(&self) -> Backend {
        Backend::ClosedForm
    }

    fn sample_space(&self, _x: &CovariateSet) -> SampleSpace {
        SampleSpace::Discrete { points: vec![vec![0.0], vec![1.0]] }
    }

    fn bin_probabilities(
        &self,
        params: &HyperParams,
        x: &CovariateSet,
        partition: &Partition,
        want_jacobian: bool,
        _mc: &MonteCarlo,
    ) -> Result<BinProbabilities> {
        let outcomes = Self::atom_outcomes(partition)?;
        let pp = self.unpack(params)?;
        let s = self.success_probability(&pp, &x.x, want_jacobian)?;
        let values = outcomes.iter().map(|&one| if one { s.p } else { s.q }).collect();
        let jacobian = s.gradient.map(|g| {
            let mut jc = DMatrix::zeros(outcomes.len(), g.len());
            for (i, &one) in outcomes.iter().enumerate() {
                for (c, v) in g.iter().enumerate() {
                    jc[(i, c)] = if one { *v } else { -v };
                }
            }
            jc * params.transform_jacobian()
        });
        Ok(BinProbabilities { values, jacobian, estimator_sd: None })
    }

    fn predictive_curve(&self, params: &HyperParams, x: &CovariateSet, grid: &[f64], _mc: &MonteCarlo) -> Result<PredictiveCurve> {
        let s = self.success_probability(&self.unpack(params)?, &x.x, false)?;
        let cdf = grid
            .iter()
            .map(|&y| if y < 0.0 { 0.0 } else if y < 1.0 { s.q } else { 1.0 })
            .collect();
        Ok(PredictiveCurve { grid: grid.to_vec(), cdf, cdf_se: None, density: None, atoms: Some(vec![(0.0, s.q), (1.0, s.p)]) })
    }

    fn initial_params(&self, _judgements: &JudgementSet) -> Result<HyperParams> {
        self.params(&vec![0.0; self.dim], &vec![1.0; self.dim], &DMatrix::identity(self.dim, self.dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn model_and_params() -> (ProbitGlmModel, HyperParams) {
        let m = ProbitGlmModel::new(3);
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.4, -0.2, 0.4, 1.0]);
        let p = m.params(&[0.4, -0.7, 1.1], &[0.5, 1.5, 0.8], &r).unwrap();
        (m, p)
    }

    #[test]
    fn counts_per_dimension() {
        let counts: Vec<usize> = (2..=6).map(|d| ProbitGlmModel::new(d).layout().unconstrained_len()).collect();
        assert_eq!(counts, vec![5, 9, 14, 20, 27]);
    }

    #[test]
    fn zero_mean_gives_half() {
        let m = ProbitGlmModel::new(2);
        let p = m.params(&[0.0, 0.0], &[3.0, 0.2], &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let s = m.success_probability(&m.unpack(&p).unwrap(), &[1.3, -2.0], false).unwrap();
        assert_eq!(s.p, 0.5);
    }

    #[test]
    fn tiny_variance_is_plain_probit() {
        let m = ProbitGlmModel::new(2);
        let p = m.params(&[1.2816, 0.0], &[1e-12, 1e-12], &DMatrix::identity(2, 2)).unwrap();
        let s = m.success_probability(&m.unpack(&p).unwrap(), &[1.0, 0.0], false).unwrap();
        assert!((s.p - 0.90).abs() < 1e-4);
    }

    #[test]
    fn matches_monte_carlo_average() {
        let (m, p) = model_and_params();
        let pp = m.unpack(&p).unwrap();
        let x = [0.8, 0.5, -1.2];
        let chol = pp.covariance().cholesky().unwrap().l();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = DVector::from_iterator(3, (0..3).map(|_| StandardNormal.sample(&mut rng)));
            let theta = &pp.mean + &chol * z;
            let v = norm_cdf(theta.dot(&DVector::from_column_slice(&x)));
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = m.success_probability(&pp, &x, false).unwrap().p;
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn jacobian_matches_differences() {
        let (m, p) = model_and_params();
        let x = CovariateSet::new(vec![0.8, 0.5, -1.2], "x");
        let part = Partition::atoms_1d(&[0.0, 1.0]);
        let mc = MonteCarlo::default();
        let jac = m.bin_probabilities(&p, &x, &part, true, &mc).unwrap().jacobian.unwrap();
        for c in 0..jac.ncols() {
            assert!(jac.column(c).sum().abs() < 1e-12);
            let h = 1e-6;
            let mut up = p.unconstrained.clone();
            up[c] += h;
            let mut dn = p.unconstrained.clone();
            dn[c] -= h;
            let vu = m.bin_probabilities(&p.with_unconstrained(up).unwrap(), &x, &part, false, &mc).unwrap().values[1];
            let vd = m.bin_probabilities(&p.with_unconstrained(dn).unwrap(), &x, &part, false, &mc).unwrap().values[1];
            let fd = (vu - vd) / (2.0 * h);
            assert!((jac[(1, c)] - fd).abs() <= 1e-6 * fd.abs() + 1e-9, "{c}: {} vs {fd}", jac[(1, c)]);
        }
    }

    #[test]
    fn atoms_give_complementary_pair() {
        let (m, p) = model_and_params();
        let x = CovariateSet::new(vec![0.8, 0.5, -1.2], "x");
        let v = m.bin_probabilities(&p, &x, &Partition::atoms_1d(&[0.0, 1.0]), false, &MonteCarlo::default()).unwrap();
        let s = m.success_probability(&m.unpack(&p).unwrap(), &x.x, false).unwrap();
        assert_eq!(v.values, vec![s.q, s.p]);
        assert!(v.is_normalised());
    }

    #[test]
    fn wrong_covariate_length() {
        let (m, p) = model_and_params();
        let r = m.success_probability(&m.unpack(&p).unwrap(), &[1.0], false);
        assert!(matches!(r, Err(Error::DimensionMismatch { expected: 3, found: 1 })));
    }
}
