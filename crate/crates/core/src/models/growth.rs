//! Stature at age `t` under a Preece–Baines growth curve
//! `h(t;θ) = h₁ − 2(h₁ − h_{t*}) / (e^{s₀(t−t*)} + e^{s₁(t−t*)})`,
//! with Weibull noise in the mean parametrisation. Each of the five curve
//! parameters has a log-normal prior `θ_d = exp(a_d + √b_d Z)` and the
//! Weibull shape a Gamma prior with shape `a₀` and rate `b₀`.
//!
//! Bin probabilities are Monte Carlo averages over the prior; gradients come
//! from the reparametrized hierarchy in [`crate::reparam`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgement::JudgementSet;
use crate::model::{
    Backend, BinProbabilities, CovariateSet, GenerativeModel, MonteCarlo, ParamSummary, PredictiveCurve,
};
use crate::params::{HyperParams, ParamBlock, ParamLayout, TransformKind};
use crate::partition::{Partition, SampleSpace};
use crate::reparam::{GammaLayer, Hierarchy, Layer, Leaf, LogNormalLayer, ProductLayer};
use crate::special::{digamma, ln_gamma};

/// Curve parameter names in prior order.
pub const CURVE_PARAMS: [&str; 5] = ["h1", "h_tstar", "tstar", "s0", "s1"];
/// A typical adult curve: final height 174.6 cm, 162.9 cm at the
/// take-off age 14.6 years, rates 0.1 and 1.2.
pub const THETA_REF: [f64; 5] = [174.6, 162.9, 14.6, 0.1, 1.2];
/// Lower bound on the Weibull mean.
pub const MEAN_FLOOR: f64 = 1e-3;

/// How the curve value enters the Weibull mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanLink {
    /// `E[Y] = h(t;θ)`, stature in cm.
    #[default]
    Identity,
    /// `E[Y] = exp(h(t;θ))`; the curve then models log-stature.
    Exp,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GrowthModel {
    pub link: MeanLink,
}

/// Curve value and its gradient in `θ = (h₁, h_{t*}, t*, s₀, s₁)`.
pub fn growth_curve_grad(t: f64, theta: &[f64]) -> (f64, [f64; 5]) {
    let (h1, hs, ts, s0, s1) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
    let tau = t - ts;
    // Scaled by e^{-c} so neither exponential overflows.
    let c = (s0 * tau).max(s1 * tau);
    let (r0, r1) = ((s0 * tau - c).exp(), (s1 * tau - c).exp());
    let sum = r0 + r1;
    let inv = (-c).exp() / sum; // 1/D
    let diff = h1 - hs;
    let h = h1 - 2.0 * diff * inv;
    // e^{s τ}/D² = r e^{-c}/sum²
    let w0 = r0 * (-c).exp() / (sum * sum);
    let w1 = r1 * (-c).exp() / (sum * sum);
    let d_tau = 2.0 * diff * (s0 * w0 + s1 * w1);
    (h, [1.0 - 2.0 * inv, 2.0 * inv, -d_tau, 2.0 * diff * tau * w0, 2.0 * diff * tau * w1])
}

pub fn growth_curve(t: f64, theta: &[f64]) -> f64 {
    growth_curve_grad(t, theta).0
}

/// Weibull with mean `m` and shape `k`: scale `m/Γ(1+1/k)`.
#[derive(Clone, Copy, Debug)]
pub struct MeanWeibull {
    pub mean: f64,
    pub shape: f64,
    /// `ln Γ(1 + 1/k)`
    lg: f64,
}

impl MeanWeibull {
    pub fn new(mean: f64, shape: f64) -> Self {
        Self { mean, shape, lg: ln_gamma(1.0 + 1.0 / shape) }
    }

    pub fn scale(&self) -> f64 {
        self.mean / self.lg.exp()
    }

    /// `z = (y/scale)^k`
    fn z(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else if y.is_infinite() {
            f64::INFINITY
        } else {
            (self.shape * ((y / self.mean).ln() + self.lg)).exp()
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        -(-self.z(y)).exp_m1()
    }

    pub fn sf(&self, y: f64) -> f64 {
        (-self.z(y)).exp()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 || y.is_infinite() {
            return 0.0;
        }
        let z = self.z(y);
        self.shape * z / y * (-z).exp()
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.scale() * (-(-u).ln_1p()).powf(1.0 / self.shape)
    }

    /// `(∂S/∂m, ∂S/∂k)` of the survival function at `y`.
    fn sf_grad(&self, y: f64) -> (f64, f64) {
        let z = self.z(y);
        if z == 0.0 || !z.is_finite() {
            return (0.0, 0.0);
        }
        let ez = (-z).exp() * z;
        let k = self.shape;
        (ez * k / self.mean, -ez * (z.ln() - digamma(1.0 + 1.0 / k)) / k)
    }
}

/// Weibull leaf over bins `(a_i, b_i]` at age `t`, with inputs
/// `(k, h₁, h_{t*}, t*, s₀, s₁)`.
struct WeibullLeaf<'a> {
    t: f64,
    link: MeanLink,
    intervals: &'a [(f64, f64)],
}

impl WeibullLeaf<'_> {
    fn mean(&self, theta: &[f64]) -> (f64, [f64; 5]) {
        let (h, dh) = growth_curve_grad(self.t, theta);
        match self.link {
            MeanLink::Identity if h > MEAN_FLOOR => (h, dh),
            MeanLink::Identity => (MEAN_FLOOR, [0.0; 5]),
            MeanLink::Exp => {
                let m = h.exp().max(MEAN_FLOOR);
                (m, dh.map(|v| v * m))
            }
        }
    }
}

impl Leaf for WeibullLeaf<'_> {
    fn n_inputs(&self) -> usize {
        6
    }
    fn n_bins(&self) -> usize {
        self.intervals.len()
    }
    fn probabilities(&self, theta: &[f64], want: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let k = theta[0];
        let (m, dm) = self.mean(&theta[1..]);
        let w = MeanWeibull::new(m, k);
        let n = self.intervals.len();
        let mut probs = Vec::with_capacity(n);
        let mut jac = want.then(|| DMatrix::zeros(n, 6));
        for (i, &(a, b)) in self.intervals.iter().enumerate() {
            // S(a) − S(b) keeps precision in the upper tail.
            probs.push((w.sf(a) - w.sf(b)).max(0.0));
            if let Some(j) = jac.as_mut() {
                let (ma, ka) = w.sf_grad(a);
                let (mb, kb) = w.sf_grad(b);
                let dmean = ma - mb;
                j[(i, 0)] = ka - kb;
                for d in 0..5 {
                    j[(i, d + 1)] = dmean * dm[d];
                }
            }
        }
        (probs, jac)
    }
}

impl GrowthModel {
    pub fn new(link: MeanLink) -> Self {
        Self { link }
    }

    fn hierarchy<'a>(&self, t: f64, intervals: &'a [(f64, f64)]) -> Result<Hierarchy<'a>> {
        let mut layers: Vec<Box<dyn Layer>> = vec![Box::new(GammaLayer)];
        layers.extend((0..5).map(|_| Box::new(LogNormalLayer) as Box<dyn Layer>));
        Hierarchy::new(vec![Box::new(ProductLayer(layers))], Box::new(WeibullLeaf { t, link: self.link, intervals }))
    }

    fn age(x: &CovariateSet) -> Result<f64> {
        match x.x.as_slice() {
            [t] => Ok(*t),
            other => Err(Error::DimensionMismatch { expected: 1, found: other.len() }),
        }
    }

    /// Hyperparameters from `(a₀, b₀)` and per-parameter `(a_d, b_d)`.
    pub fn params(&self, shape: f64, rate: f64, lognormal: &[(f64, f64); 5]) -> Result<HyperParams> {
        let mut c = vec![shape, rate];
        for &(a, b) in lognormal {
            c.push(a);
            c.push(b);
        }
        HyperParams::from_constrained(self.layout(), c)
    }

    /// Predictive quantile at age `t`.
    pub fn predictive_quantile(&self, params: &HyperParams, t: f64, level: f64, mc: &MonteCarlo) -> Result<f64> {
        Ok(self.predictive_quantiles(params, t, &[level], mc)?[0])
    }

    /// Quantiles of the Monte Carlo predictive mixture at age `t`. The
    /// draws are taken once; each level is found by bisection between the
    /// smallest and largest component quantiles.
    pub fn predictive_quantiles(&self, params: &HyperParams, t: f64, levels: &[f64], mc: &MonteCarlo) -> Result<Vec<f64>> {
        if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::InvalidConfig(format!("quantile level {l} outside (0, 1)")));
        }
        let leaf = WeibullLeaf { t, link: self.link, intervals: &[] };
        let parts: Vec<MeanWeibull> = self
            .hierarchy(t, &[])?
            .leaf_inputs(&params.constrained, mc.draws, mc.seed)?
            .iter()
            .map(|theta| MeanWeibull::new(leaf.mean(&theta[1..]).0, theta[0]))
            .collect();
        let n = parts.len() as f64;
        levels
            .par_iter()
            .map(|&level| {
                let (mut lo, mut hi) = parts
                    .iter()
                    .map(|w| w.quantile(level))
                    .fold((f64::INFINITY, 0.0f64), |(a, b), q| (a.min(q), b.max(q)));
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(Error::NonFiniteDraw);
                }
                while hi - lo > 1e-10 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let cdf = parts.iter().map(|w| w.cdf(mid)).sum::<f64>() / n;
                    if cdf >= level {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            })
            .collect()
    }
}

impl GenerativeModel for GrowthModel {
    fn name(&self) -> &'static str {
        "growth-weibull"
    }

    fn layout(&self) -> ParamLayout {
        let mut blocks = vec![ParamBlock::new("a0", TransformKind::Log, 1), ParamBlock::new("b0", TransformKind::Log, 1)];
        for d in 1..=5 {
            blocks.push(ParamBlock::new(format!("a{d}"), TransformKind::Identity, 1));
            blocks.push(ParamBlock::new(format!("b{d}"), TransformKind::Log, 1));
        }
        ParamLayout::new(blocks)
    }

    fn backend(&self) -> Backend {
        Backend::MonteCarlo
    }

    fn sample_space(&self, _x: &CovariateSet) -> SampleSpace {
        SampleSpace::positive_half_line()
    }

    fn bin_probabilities(
        &self,
        params: &HyperParams,
        x: &CovariateSet,
        partition: &Partition,
        want_jacobian: bool,
        mc: &MonteCarlo,
    ) -> Result<BinProbabilities> {
        let t = Self::age(x)?;
        let intervals = partition
            .intervals()
            .ok_or_else(|| Error::SpaceMismatch("stature needs one-dimensional intervals".into()))?;
        let h = self.hierarchy(t, &intervals)?;
        let est = h.estimate(&params.constrained, mc.draws, mc.seed, want_jacobian)?;
        Ok(BinProbabilities {
            values: est.values,
            jacobian: est.gradient.map(|g| g * params.transform_jacobian()),
            estimator_sd: Some(est.sd),
        })
    }

    fn predictive_curve(&self, params: &HyperParams, x: &CovariateSet, grid: &[f64], mc: &MonteCarlo) -> Result<PredictiveCurve> {
        let t = Self::age(x)?;
        let cells: Vec<(f64, f64)> = grid.iter().map(|&y| (0.0, y.max(0.0))).collect();
        let est = self.hierarchy(t, &cells)?.estimate(&params.constrained, mc.draws, mc.seed, false)?;
        // The density is the derivative of the averaged CDF, estimated with
        // the same draws.
        let density = if grid.len() > 1 {
            let n = grid.len();
            Some(
                (0..n)
                    .map(|i| {
                        let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
                        (est.values[r] - est.values[l]) / (grid[r] - grid[l])
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(PredictiveCurve { grid: grid.to_vec(), cdf: est.values, cdf_se: Some(est.sd), density, atoms: None })
    }

    /// Log-normal locations at the reference curve with unit log-variances;
    /// Weibull shape centred at 10.
    fn initial_params(&self, _judgements: &JudgementSet) -> Result<HyperParams> {
        let mut ln = [(0.0, 1.0); 5];
        for (d, v) in THETA_REF.iter().enumerate() {
            let centre = match (self.link, d) {
                (MeanLink::Exp, 0 | 1) => v.ln().ln(),
                _ => v.ln(),
            };
            ln[d] = (centre, 1.0);
        }
        self.params(10.0, 1.0, &ln)
    }

    /// Prior means and variances of `θ` and the Weibull shape.
    fn prior_summary(&self, params: &HyperParams) -> Vec<ParamSummary> {
        let c = &params.constrained;
        let mut out = Vec::with_capacity(6);
        for (d, name) in CURVE_PARAMS.iter().enumerate() {
            let (a, b) = (c[2 + 2 * d], c[3 + 2 * d]);
            out.push(ParamSummary {
                name: (*name).into(),
                mean: (a + b / 2.0).exp(),
                variance: Some(b.exp_m1() * (2.0 * a + b).exp()),
                reference: Some(THETA_REF[d]),
            });
        }
        out.push(ParamSummary { name: "shape".into(), mean: c[0] / c[1], variance: Some(c[0] / (c[1] * c[1])), reference: None });
        out
    }
}
