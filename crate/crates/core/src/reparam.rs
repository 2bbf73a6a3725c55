//! Reparametrization gradients for hierarchical priors.
//!
//! A hierarchy maps the hyperparameters through one or more layers of
//! random quantities down to a leaf that gives closed-form bin
//! probabilities. Each layer turns base noise into its outputs either
//! through a pivotal map (`θ = μ + σZ`, `θ = exp(a + √b Z)`) or, when no
//! pivot exists, by inverting its CDF at a uniform draw and differentiating
//! the identity `F(θ; λ) = U` implicitly.
//!
//! The estimate and its pathwise gradient are averaged over seeded shards
//! that are reduced in index order, so results do not depend on the thread
//! pool.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::special::{gamma_lr_da, gamma_lr_inv, gamma_pdf, norm_ppf};

const SHARD: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Pivotal,
    Implicit,
    /// Neither a pivot nor a differentiable CDF is available.
    Opaque,
}

/// Output of one layer for one draw: values and `d outputs / d params`.
pub struct LayerDraw {
    pub values: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

pub trait Layer: Send + Sync {
    fn kind(&self) -> LayerKind;
    fn n_params(&self) -> usize;
    fn n_outputs(&self) -> usize;
    /// Base noise consumed per draw.
    fn n_noise(&self) -> usize {
        self.n_outputs()
    }
    fn draw_noise(&self, rng: &mut StreamRng, out: &mut Vec<f64>) {
        for _ in 0..self.n_noise() {
            out.push(match self.kind() {
                LayerKind::Implicit => rng.random::<f64>(),
                _ => rng.sample(StandardNormal),
            });
        }
    }
    fn transform(&self, params: &[f64], noise: &[f64]) -> Result<LayerDraw>;
}

/// Closed-form bin probabilities given the innermost parameters.
pub trait Leaf: Send + Sync {
    fn n_inputs(&self) -> usize;
    fn n_bins(&self) -> usize;
    /// Probabilities and their `n_bins × n_inputs` derivatives.
    fn probabilities(&self, theta: &[f64], want_jacobian: bool) -> (Vec<f64>, Option<DMatrix<f64>>);
}

/// `θ = μ + √v Z` with params `(μ, v)`.
pub struct NormalLayer;

impl Layer for NormalLayer {
    fn kind(&self) -> LayerKind {
        LayerKind::Pivotal
    }
    fn n_params(&self) -> usize {
        2
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn transform(&self, params: &[f64], noise: &[f64]) -> Result<LayerDraw> {
        let (mu, v) = (params[0], params[1]);
        if v < 0.0 {
            return Err(Error::NonPositiveVariance(v));
        }
        let sd = v.sqrt();
        let z = noise[0];
        let dv = if sd > 0.0 { z / (2.0 * sd) } else { 0.0 };
        Ok(LayerDraw { values: vec![mu + sd * z], jacobian: DMatrix::from_row_slice(1, 2, &[1.0, dv]) })
    }
}

/// `θ = exp(a + √b Z)` with params `(a, b)`.
pub struct LogNormalLayer;

impl Layer for LogNormalLayer {
    fn kind(&self) -> LayerKind {
        LayerKind::Pivotal
    }
    fn n_params(&self) -> usize {
        2
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn transform(&self, params: &[f64], noise: &[f64]) -> Result<LayerDraw> {
        let (a, b) = (params[0], params[1]);
        if b < 0.0 {
            return Err(Error::NonPositiveVariance(b));
        }
        let sd = b.sqrt();
        let theta = (a + sd * noise[0]).exp();
        let db = if sd > 0.0 { theta * noise[0] / (2.0 * sd) } else { 0.0 };
        Ok(LayerDraw { values: vec![theta], jacobian: DMatrix::from_row_slice(1, 2, &[theta, db]) })
    }
}

/// Gamma with params `(shape, rate)`, drawn by inverting the CDF at a
/// uniform. Derivatives follow from `P(shape, rate·θ) = U`.
pub struct GammaLayer;

/// Shape above which the Wilson–Hilferty cube-root normal map replaces the
/// exact inverse CDF; its relative error there is far below Monte Carlo
/// noise and the exact route costs `O(√shape)` per draw.
pub const WILSON_HILFERTY_SHAPE: f64 = 1e4;

impl Layer for GammaLayer {
    fn kind(&self) -> LayerKind {
        LayerKind::Implicit
    }
    fn n_params(&self) -> usize {
        2
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn transform(&self, params: &[f64], noise: &[f64]) -> Result<LayerDraw> {
        let (shape, rate) = (params[0], params[1]);
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::InvalidParams(format!("gamma shape {shape} and rate {rate} must be positive")));
        }
        if shape > WILSON_HILFERTY_SHAPE {
            let c = 1.0 / (9.0 * shape);
            let z = norm_ppf(noise[0]);
            let s = 1.0 - c + z * c.sqrt();
            let g = shape * s.powi(3);
            let ds = c / shape - z * c.sqrt() / (2.0 * shape);
            let d_shape = (s.powi(3) + 3.0 * shape * s * s * ds) / rate;
            let theta = g / rate;
            return Ok(LayerDraw { values: vec![theta], jacobian: DMatrix::from_row_slice(1, 2, &[d_shape, -theta / rate]) });
        }
        let g = gamma_lr_inv(shape, noise[0]);
        let theta = g / rate;
        let pdf = gamma_pdf(shape, g);
        let d_shape = if pdf > 0.0 { -gamma_lr_da(shape, g) / (rate * pdf) } else { 0.0 };
        let d_rate = -theta / rate;
        Ok(LayerDraw { values: vec![theta], jacobian: DMatrix::from_row_slice(1, 2, &[d_shape, d_rate]) })
    }
}

/// Independent sub-layers over consecutive parameter slices, with outputs
/// concatenated in order.
pub struct ProductLayer(pub Vec<Box<dyn Layer>>);

impl Layer for ProductLayer {
    fn kind(&self) -> LayerKind {
        if self.0.iter().any(|l| l.kind() == LayerKind::Opaque) {
            LayerKind::Opaque
        } else {
            LayerKind::Pivotal
        }
    }
    fn n_params(&self) -> usize {
        self.0.iter().map(|l| l.n_params()).sum()
    }
    fn n_outputs(&self) -> usize {
        self.0.iter().map(|l| l.n_outputs()).sum()
    }
    fn n_noise(&self) -> usize {
        self.0.iter().map(|l| l.n_noise()).sum()
    }
    fn draw_noise(&self, rng: &mut StreamRng, out: &mut Vec<f64>) {
        for l in &self.0 {
            l.draw_noise(rng, out);
        }
    }
    fn transform(&self, params: &[f64], noise: &[f64]) -> Result<LayerDraw> {
        let mut values = Vec::with_capacity(self.n_outputs());
        let mut jac = DMatrix::zeros(self.n_outputs(), self.n_params());
        let (mut p0, mut n0, mut o0) = (0, 0, 0);
        for l in &self.0 {
            let (np, nn, no) = (l.n_params(), l.n_noise(), l.n_outputs());
            let d = l.transform(&params[p0..p0 + np], &noise[n0..n0 + nn])?;
            values.extend(d.values);
            jac.view_mut((o0, p0), (no, np)).copy_from(&d.jacobian);
            p0 += np;
            n0 += nn;
            o0 += no;
        }
        Ok(LayerDraw { values, jacobian: jac })
    }
}

/// Layers ordered from the hyperparameters inwards, ending in a leaf.
pub struct Hierarchy<'a> {
    layers: Vec<Box<dyn Layer + 'a>>,
    leaf: Box<dyn Leaf + 'a>,
}

#[derive(Clone, Debug)]
pub struct ReparamEstimate {
    pub values: Vec<f64>,
    /// Standard error of each entry of `values`.
    pub sd: Vec<f64>,
    /// `n_bins × n_params` derivatives with respect to the hyperparameters
    /// fed to the outermost layer.
    pub gradient: Option<DMatrix<f64>>,
}

impl<'a> Hierarchy<'a> {
    pub fn new(layers: Vec<Box<dyn Layer + 'a>>, leaf: Box<dyn Leaf + 'a>) -> Result<Self> {
        if let Some(i) = layers.iter().position(|l| l.kind() == LayerKind::Opaque) {
            return Err(Error::NoPivotalMap(i));
        }
        for w in layers.windows(2) {
            if w[0].n_outputs() != w[1].n_params() {
                return Err(Error::DimensionMismatch { expected: w[1].n_params(), found: w[0].n_outputs() });
            }
        }
        let inner = layers.last().map_or(0, |l| l.n_outputs());
        if !layers.is_empty() && inner != leaf.n_inputs() {
            return Err(Error::DimensionMismatch { expected: leaf.n_inputs(), found: inner });
        }
        Ok(Self { layers, leaf })
    }

    pub fn n_params(&self) -> usize {
        self.layers.first().map_or(self.leaf.n_inputs(), |l| l.n_params())
    }

    /// Leaf inputs for one draw, with their chained derivatives.
    fn propagate(&self, params: &[f64], noise: &[f64], want: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let mut values = params.to_vec();
        let mut chain: Option<DMatrix<f64>> = want.then(|| DMatrix::identity(params.len(), params.len()));
        let mut at = 0;
        for layer in &self.layers {
            let nn = layer.n_noise();
            let d = layer.transform(&values, &noise[at..at + nn])?;
            at += nn;
            chain = chain.map(|c| &d.jacobian * c);
            values = d.values;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDraw);
        }
        Ok((values, chain))
    }

    /// One draw: leaf probabilities and their gradient w.r.t. `params`.
    fn evaluate(&self, params: &[f64], noise: &[f64], want: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let (values, chain) = self.propagate(params, noise, want)?;
        let (probs, dleaf) = self.leaf.probabilities(&values, want);
        let grad = match (chain, dleaf) {
            (Some(c), Some(dl)) => Some(dl * c),
            _ => None,
        };
        Ok((probs, grad))
    }

    fn n_noise(&self) -> usize {
        self.layers.iter().map(|l| l.n_noise()).sum()
    }

    fn draw(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut noise = Vec::with_capacity(self.n_noise());
        for l in &self.layers {
            l.draw_noise(rng, &mut noise);
        }
        noise
    }

    /// Leaf inputs for `draws` seeded draws, from the same streams as
    /// [`Hierarchy::estimate`]. Non-finite draws are skipped.
    pub fn leaf_inputs(&self, params: &[f64], draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), found: params.len() });
        }
        let draws = draws.max(1);
        let parts: Vec<Result<Vec<Vec<f64>>>> = (0..draws.div_ceil(SHARD))
            .into_par_iter()
            .map(|s| {
                let count = SHARD.min(draws - s * SHARD);
                let mut rng = stream(seed, s as u64);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    match self.propagate(params, &self.draw(&mut rng), false) {
                        Ok((v, _)) => out.push(v),
                        Err(Error::NonFiniteDraw) => {}
                        Err(e) => return Err(e),
                    }
                }
                Ok(out)
            })
            .collect();
        let mut out = Vec::with_capacity(draws);
        for p in parts {
            out.extend(p?);
        }
        if out.is_empty() {
            return Err(Error::NonFiniteDraw);
        }
        Ok(out)
    }

    /// Averages leaf probabilities over `draws` seeded draws. Draws with
    /// non-finite intermediates are replaced from the same stream up to a
    /// retry budget.
    pub fn estimate(&self, params: &[f64], draws: usize, seed: u64, want_gradient: bool) -> Result<ReparamEstimate> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), found: params.len() });
        }
        let draws = draws.max(1);
        let n = self.leaf.n_bins();
        let m = params.len();
        let shards = draws.div_ceil(SHARD);
        let budget = (draws / 64).max(16);
        // Sums are taken about a pilot draw, which keeps the variance
        // accurate and makes a degenerate prior reproduce its leaf exactly.
        let shift = self
            .evaluate(params, &self.draw(&mut stream(seed, u64::MAX)), false)
            .ok()
            .map(|(p, _)| p)
            .filter(|p| p.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| vec![0.0; n]);
        struct Acc {
            sum: Vec<f64>,
            sum_sq: Vec<f64>,
            grad: Option<DMatrix<f64>>,
            failed: usize,
        }
        let parts: Vec<Result<Acc>> = (0..shards)
            .into_par_iter()
            .map(|s| {
                let count = SHARD.min(draws - s * SHARD);
                let mut rng = stream(seed, s as u64);
                let mut acc = Acc {
                    sum: vec![0.0; n],
                    sum_sq: vec![0.0; n],
                    grad: want_gradient.then(|| DMatrix::zeros(n, m)),
                    failed: 0,
                };
                let mut done = 0;
                while done < count {
                    let noise = self.draw(&mut rng);
                    match self.evaluate(params, &noise, want_gradient) {
                        Ok((p, g)) if p.iter().all(|v| v.is_finite()) && g.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite())) => {
                            for i in 0..n {
                                let d = p[i] - shift[i];
                                acc.sum[i] += d;
                                acc.sum_sq[i] += d * d;
                            }
                            if let (Some(a), Some(g)) = (acc.grad.as_mut(), g) {
                                *a += g;
                            }
                            done += 1;
                        }
                        Ok(_) | Err(Error::NonFiniteDraw) => {
                            acc.failed += 1;
                            if acc.failed > budget {
                                return Ok(acc);
                            }
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        let mut grad = want_gradient.then(|| DMatrix::zeros(n, m));
        let mut failed = 0;
        for part in parts {
            let part = part?;
            failed += part.failed;
            for i in 0..n {
                sum[i] += part.sum[i];
                sum_sq[i] += part.sum_sq[i];
            }
            if let (Some(a), Some(g)) = (grad.as_mut(), part.grad) {
                *a += g;
            }
        }
        if failed > budget {
            return Err(Error::McBudgetExceeded { failed, budget });
        }
        let s = draws as f64;
        let values: Vec<f64> = sum.iter().zip(&shift).map(|(v, c)| c + v / s).collect();
        let sd = sum
            .iter()
            .zip(&sum_sq)
            .map(|(v, sq)| ((sq / s - (v / s).powi(2)).max(0.0) / s).sqrt())
            .collect();
        Ok(ReparamEstimate { values, sd, gradient: grad.map(|g| g / s) })
    }
}

/// Bin probabilities and gradient for a hierarchy at `params`.
pub fn reparam_bin_probabilities(
    hierarchy: &Hierarchy<'_>,
    params: &[f64],
    draws: usize,
    seed: u64,
) -> Result<ReparamEstimate> {
    hierarchy.estimate(params, draws, seed, true)
}
