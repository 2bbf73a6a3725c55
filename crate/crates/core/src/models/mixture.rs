//! Gaussian mixture prior predictive:
//! `Y ~ Σ_k w_k N(μ_k, σ² + σ_k²)`, with `μ_k` the prior means of the
//! component locations, `σ²` the observation noise and `σ_k²` the prior
//! variances.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgement::JudgementSet;
use crate::model::{
    Backend, BinProbabilities, CovariateSet, GenerativeModel, MonteCarlo, PredictiveCdf, PredictiveCurve,
};
use crate::params::{HyperParams, ParamBlock, ParamLayout, TransformKind};
use crate::partition::{Partition, SampleSpace};
use crate::special::{norm_cdf, norm_interval, norm_pdf};

/// Whether the observation noise `σ²` is estimated or held fixed. Only the
/// sums `σ² + σ_k²` enter the predictive, so the free variant has one
/// direction the judgements cannot identify.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseVariance {
    Free,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureModel {
    pub components: usize,
    pub noise: NoiseVariance,
}

/// Unpacked hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub means: Vec<f64>,
    pub noise: f64,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixtureParams {
    pub fn scale(&self, k: usize) -> f64 {
        (self.noise + self.variances[k]).sqrt()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        (0..self.means.len()).map(|k| self.weights[k] * norm_cdf((y - self.means[k]) / self.scale(k))).sum()
    }

    pub fn density(&self, y: f64) -> f64 {
        (0..self.means.len())
            .map(|k| {
                let s = self.scale(k);
                self.weights[k] * norm_pdf((y - self.means[k]) / s) / s
            })
            .sum()
    }
}

impl GaussianMixtureModel {
    pub fn new(components: usize) -> Self {
        Self { components, noise: NoiseVariance::Free }
    }

    pub fn with_fixed_noise(components: usize, noise: f64) -> Self {
        Self { components, noise: NoiseVariance::Fixed(noise) }
    }

    fn free_noise(&self) -> bool {
        matches!(self.noise, NoiseVariance::Free)
    }

    /// Constrained vector from unpacked values, in layout order.
    pub fn params(&self, means: &[f64], noise: f64, variances: &[f64], weights: &[f64]) -> Result<HyperParams> {
        let k = self.components;
        if means.len() != k || variances.len() != k || weights.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: means.len() });
        }
        let mut c = means.to_vec();
        if self.free_noise() {
            c.push(noise);
        }
        c.extend_from_slice(variances);
        c.extend_from_slice(weights);
        HyperParams::from_constrained(self.layout(), c)
    }

    pub fn unpack(&self, params: &HyperParams) -> Result<MixtureParams> {
        let k = self.components;
        let c = &params.constrained;
        let expected = self.layout().constrained_len();
        if c.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: c.len() });
        }
        let (noise, rest) = match self.noise {
            NoiseVariance::Free => (c[k], &c[k + 1..]),
            NoiseVariance::Fixed(v) => (v, &c[k..]),
        };
        let out = MixtureParams {
            means: c[..k].to_vec(),
            noise,
            variances: rest[..k].to_vec(),
            weights: rest[k..2 * k].to_vec(),
        };
        for k in 0..k {
            let v = out.noise + out.variances[k];
            if !(v > 0.0) {
                return Err(Error::NonPositiveVariance(v));
            }
        }
        Ok(out)
    }

    /// Probability of `(a, b]` and, optionally, its derivatives with
    /// respect to the constrained hyperparameters.
    pub fn bin_probability(&self, params: &MixtureParams, a: f64, b: f64, want: bool) -> (f64, Option<Vec<f64>>) {
        let k = self.components;
        let mut p = 0.0;
        let mut grad = want.then(|| vec![0.0; self.layout().constrained_len()]);
        let off_var = if self.free_noise() { k + 1 } else { k };
        let off_w = off_var + k;
        for c in 0..k {
            let s = params.scale(c);
            let (za, zb) = ((a - params.means[c]) / s, (b - params.means[c]) / s);
            let mass = norm_interval(za, zb);
            p += params.weights[c] * mass;
            if let Some(g) = grad.as_mut() {
                let w = params.weights[c];
                let (pa, pb) = (norm_pdf(za), norm_pdf(zb));
                let (zpa, zpb) = (finite_or_zero(za * pa), finite_or_zero(zb * pb));
                g[c] = w * (pa - pb) / s;
                let dv = w * (zpa - zpb) / (2.0 * s * s);
                g[off_var + c] = dv;
                if self.free_noise() {
                    g[k] += dv;
                }
                g[off_w + c] = mass;
            }
        }
        (p.clamp(0.0, 1.0), grad)
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

struct MixtureCdf(MixtureParams);

impl PredictiveCdf for MixtureCdf {
    fn dim(&self) -> usize {
        1
    }
    fn cdf(&self, y: &[f64]) -> f64 {
        self.0.cdf(y[0])
    }
}

/// Predictive mean and variance implied by a judgement over intervals,
/// placing each cell's mass at its midpoint. Unbounded cells are given the
/// average width of the bounded range.
pub(crate) fn judged_moments(intervals: &[(f64, f64)], p: &[f64]) -> Option<(f64, f64)> {
    let finite: Vec<f64> = intervals.iter().flat_map(|&(a, b)| [a, b]).filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / intervals.len().max(1) as f64).max(1e-6);
    let mids: Vec<f64> = intervals
        .iter()
        .map(|&(a, b)| match (a.is_finite(), b.is_finite()) {
            (true, true) => 0.5 * (a + b),
            (false, true) => b - 0.5 * width,
            (true, false) => a + 0.5 * width,
            (false, false) => 0.5 * (lo + hi),
        })
        .collect();
    let mean: f64 = mids.iter().zip(p).map(|(m, w)| m * w).sum();
    let var: f64 = mids.iter().zip(p).map(|(m, w)| w * (m - mean).powi(2)).sum();
    Some((mean, var.max(width * width / 12.0)))
}

impl GenerativeModel for GaussianMixtureModel {
    fn name(&self) -> &'static str {
        "gaussian-mixture"
    }

    fn layout(&self) -> ParamLayout {
        let k = self.components;
        let mut blocks = vec![ParamBlock::new("mu", TransformKind::Identity, k)];
        if self.free_noise() {
            blocks.push(ParamBlock::new("sigma2", TransformKind::Log, 1));
        }
        blocks.push(ParamBlock::new("sigma2_k", TransformKind::Log, k));
        blocks.push(ParamBlock::new("w", TransformKind::Simplex, k));
        ParamLayout::new(blocks)
    }

    fn backend(&self) -> Backend {
        Backend::ClosedForm
    }

    fn sample_space(&self, _x: &CovariateSet) -> SampleSpace {
        SampleSpace::Real { dim: 1 }
    }

    fn bin_probabilities(
        &self,
        params: &HyperParams,
        _x: &CovariateSet,
        partition: &Partition,
        want_jacobian: bool,
        _mc: &MonteCarlo,
    ) -> Result<BinProbabilities> {
        let mp = self.unpack(params)?;
        let intervals = partition
            .intervals()
            .ok_or_else(|| Error::SpaceMismatch("mixture predictive needs one-dimensional intervals".into()))?;
        let n = intervals.len();
        let mut values = Vec::with_capacity(n);
        let mut jc = want_jacobian.then(|| DMatrix::zeros(n, params.constrained.len()));
        for (i, &(a, b)) in intervals.iter().enumerate() {
            let (p, g) = self.bin_probability(&mp, a, b, want_jacobian);
            values.push(p);
            if let (Some(m), Some(g)) = (jc.as_mut(), g) {
                for (c, v) in g.into_iter().enumerate() {
                    m[(i, c)] = v;
                }
            }
        }
        let jacobian = jc.map(|m| m * params.transform_jacobian());
        Ok(BinProbabilities { values, jacobian, estimator_sd: None })
    }

    fn predictive_cdf<'a>(&'a self, params: &'a HyperParams, _x: &'a CovariateSet) -> Option<Box<dyn PredictiveCdf + 'a>> {
        Some(Box::new(MixtureCdf(self.unpack(params).ok()?)))
    }

    fn predictive_curve(&self, params: &HyperParams, _x: &CovariateSet, grid: &[f64], _mc: &MonteCarlo) -> Result<PredictiveCurve> {
        let mp = self.unpack(params)?;
        Ok(PredictiveCurve {
            grid: grid.to_vec(),
            cdf: grid.iter().map(|&y| mp.cdf(y)).collect(),
            cdf_se: None,
            density: Some(grid.iter().map(|&y| mp.density(y)).collect()),
            atoms: None,
        })
    }

    /// Matches the judged predictive mean and variance, with component
    /// means spread one standard deviation either side.
    fn initial_params(&self, judgements: &JudgementSet) -> Result<HyperParams> {
        let mut moments = Vec::new();
        for j in &judgements.judgements {
            if let Some(iv) = j.partition.intervals() {
                moments.extend(judged_moments(&iv, &j.p));
            }
        }
        if moments.is_empty() {
            return Err(Error::NoJudgements);
        }
        let mean = moments.iter().map(|m| m.0).sum::<f64>() / moments.len() as f64;
        let var = moments.iter().map(|m| m.1).sum::<f64>() / moments.len() as f64;
        let sd = var.sqrt();
        let k = self.components;
        let means: Vec<f64> = if k == 1 {
            vec![mean]
        } else {
            (0..k).map(|c| mean - sd + 2.0 * sd * c as f64 / (k - 1) as f64).collect()
        };
        let (noise, comp) = match self.noise {
            NoiseVariance::Free => (var / 4.0, var / 4.0),
            NoiseVariance::Fixed(v) => (v, (var / 2.0 - v).max(0.1 * var)),
        };
        self.params(&means, noise, &vec![comp; k], &vec![1.0 / k as f64; k])
    }

    /// Sorts components by mean.
    fn canonicalize(&self, params: HyperParams) -> HyperParams {
        let Ok(mp) = self.unpack(&params) else { return params };
        let mut order: Vec<usize> = (0..self.components).collect();
        order.sort_by(|&a, &b| mp.means[a].total_cmp(&mp.means[b]));
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return params;
        }
        let pick = |v: &[f64]| order.iter().map(|&o| v[o]).collect::<Vec<_>>();
        let k = self.components;
        // Permute the unconstrained simplex coordinates directly so the
        // result does not drift through a round trip.
        let mut logw: Vec<f64> = {
            let (_, u0) = params.layout.offsets(params.layout.blocks.len() - 1);
            let mut v = params.unconstrained[u0..u0 + k - 1].to_vec();
            v.push(0.0);
            v
        };
        logw = pick(&logw);
        let last = logw[k - 1];
        let mut u = pick(&mp.means);
        if self.free_noise() {
            u.push(mp.noise.ln());
        }
        u.extend(pick(&mp.variances).iter().map(|v| v.ln()));
        u.extend(logw[..k - 1].iter().map(|v| v - last));
        params.with_unconstrained(u).unwrap_or(params)
    }
}
