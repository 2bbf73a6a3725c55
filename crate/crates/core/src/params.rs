//! Hyperparameter vectors and their constrained ↔ unconstrained mappings.
//!
//! Every optimiser works on the unconstrained vector. Blocks map as
//! follows:
//!
//! * `identity` — unchanged;
//! * `log` — positive values (variances, shapes, rates) as their logarithm;
//! * `simplex` — `K` weights as `K − 1` log-ratios against the last weight;
//! * `correlation-cholesky` — a `D × D` correlation matrix, stored
//!   constrained as its strictly lower triangle, unconstrained as the
//!   off-diagonal entries of a unit lower-triangular factor `L` with
//!   `R = N L Lᵀ N`, `N = diag(L Lᵀ)^{-1/2}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Identity,
    Log,
    Simplex,
    CorrelationCholesky,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub transform: TransformKind,
    /// Entry count for identity/log, weight count for simplex, matrix
    /// dimension for correlation blocks.
    pub size: usize,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, transform: TransformKind, size: usize) -> Self {
        Self { name: name.into(), transform, size }
    }

    pub fn constrained_len(&self) -> usize {
        match self.transform {
            TransformKind::CorrelationCholesky => self.size * (self.size - 1) / 2,
            _ => self.size,
        }
    }

    pub fn unconstrained_len(&self) -> usize {
        match self.transform {
            TransformKind::Simplex => self.size - 1,
            TransformKind::CorrelationCholesky => self.size * (self.size - 1) / 2,
            _ => self.size,
        }
    }

    fn names(&self, unconstrained: bool) -> Vec<String> {
        let n = &self.name;
        match self.transform {
            TransformKind::CorrelationCholesky => {
                let mut out = Vec::new();
                for i in 1..self.size {
                    for j in 0..i {
                        out.push(format!("{n}[{},{}]", i + 1, j + 1));
                    }
                }
                out
            }
            _ => {
                let len = if unconstrained { self.unconstrained_len() } else { self.constrained_len() };
                if self.size == 1 && self.transform != TransformKind::Simplex {
                    vec![n.clone()]
                } else {
                    (1..=len).map(|k| format!("{n}[{k}]")).collect()
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

fn corr_index(i: usize, j: usize) -> usize {
    debug_assert!(i > j);
    i * (i - 1) / 2 + j
}

/// Correlation matrix from its strictly-lower-triangle entries.
pub fn correlation_matrix(dim: usize, lower: &[f64]) -> DMatrix<f64> {
    let mut r = DMatrix::identity(dim, dim);
    for i in 1..dim {
        for j in 0..i {
            let v = lower[corr_index(i, j)];
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Unit-norm rows of the normalised factor, plus the raw row norms.
fn normalised_rows(dim: usize, free: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let mut l = DMatrix::identity(dim, dim);
    for i in 1..dim {
        for j in 0..i {
            l[(i, j)] = free[corr_index(i, j)];
        }
    }
    let norms: Vec<f64> = (0..dim).map(|i| l.row(i).norm()).collect();
    for i in 0..dim {
        let r = norms[i];
        for k in 0..dim {
            l[(i, k)] /= r;
        }
    }
    (l, norms)
}

impl ParamLayout {
    pub fn new(blocks: Vec<ParamBlock>) -> Self {
        Self { blocks }
    }

    pub fn constrained_len(&self) -> usize {
        self.blocks.iter().map(ParamBlock::constrained_len).sum()
    }

    pub fn unconstrained_len(&self) -> usize {
        self.blocks.iter().map(ParamBlock::unconstrained_len).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.names(false)).collect()
    }

    pub fn unconstrained_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| match b.transform {
                TransformKind::Identity => b.names(true),
                TransformKind::Log => b.names(true).into_iter().map(|n| format!("log {n}")).collect(),
                TransformKind::Simplex => (1..b.size).map(|k| format!("log {}[{k}]/{}[{}]", b.name, b.name, b.size)).collect(),
                TransformKind::CorrelationCholesky => b.names(true).into_iter().map(|n| format!("chol {n}")).collect(),
            })
            .collect()
    }

    /// Offsets of block `index` in the constrained and unconstrained vectors.
    pub fn offsets(&self, index: usize) -> (usize, usize) {
        self.blocks[..index]
            .iter()
            .fold((0, 0), |(c, u), b| (c + b.constrained_len(), u + b.unconstrained_len()))
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn to_unconstrained(&self, constrained: &[f64]) -> Result<Vec<f64>> {
        if constrained.len() != self.constrained_len() {
            return Err(Error::DimensionMismatch { expected: self.constrained_len(), found: constrained.len() });
        }
        let mut out = Vec::with_capacity(self.unconstrained_len());
        let mut at = 0;
        for block in &self.blocks {
            let vals = &constrained[at..at + block.constrained_len()];
            at += block.constrained_len();
            match block.transform {
                TransformKind::Identity => {
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidParams(format!("{} must be finite", block.name)));
                    }
                    out.extend_from_slice(vals);
                }
                TransformKind::Log => {
                    for &v in vals {
                        if !(v > 0.0 && v.is_finite()) {
                            return Err(Error::InvalidParams(format!("{} must be positive, got {v}", block.name)));
                        }
                        out.push(v.ln());
                    }
                }
                TransformKind::Simplex => {
                    let sum: f64 = vals.iter().sum();
                    if vals.iter().any(|&v| !(v > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidParams(format!("{} must be an interior simplex point", block.name)));
                    }
                    let last = vals[block.size - 1].ln();
                    out.extend(vals[..block.size - 1].iter().map(|v| v.ln() - last));
                }
                TransformKind::CorrelationCholesky => {
                    let d = block.size;
                    let r = correlation_matrix(d, vals);
                    let chol = r
                        .cholesky()
                        .ok_or_else(|| Error::InvalidParams(format!("{} is not positive definite", block.name)))?;
                    let c = chol.l();
                    for i in 1..d {
                        for j in 0..i {
                            out.push(c[(i, j)] / c[(i, i)]);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn to_constrained(&self, unconstrained: &[f64]) -> Result<Vec<f64>> {
        if unconstrained.len() != self.unconstrained_len() {
            return Err(Error::DimensionMismatch { expected: self.unconstrained_len(), found: unconstrained.len() });
        }
        if unconstrained.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("unconstrained vector is not finite".into()));
        }
        let mut out = Vec::with_capacity(self.constrained_len());
        let mut at = 0;
        for block in &self.blocks {
            let vals = &unconstrained[at..at + block.unconstrained_len()];
            at += block.unconstrained_len();
            match block.transform {
                TransformKind::Identity => out.extend_from_slice(vals),
                TransformKind::Log => out.extend(vals.iter().map(|v| v.exp())),
                TransformKind::Simplex => {
                    let max = vals.iter().cloned().fold(0.0f64, f64::max);
                    let exps: Vec<f64> = vals.iter().map(|v| (v - max).exp()).chain([(-max).exp()]).collect();
                    let total: f64 = exps.iter().sum();
                    out.extend(exps.iter().map(|e| e / total));
                }
                TransformKind::CorrelationCholesky => {
                    let d = block.size;
                    let (u, _) = normalised_rows(d, vals);
                    for i in 1..d {
                        for j in 0..i {
                            out.push(u.row(i).dot(&u.row(j)));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// d constrained / d unconstrained, shape `(constrained_len, unconstrained_len)`.
    pub fn jacobian(&self, unconstrained: &[f64]) -> Result<DMatrix<f64>> {
        let constrained = self.to_constrained(unconstrained)?;
        let mut jac = DMatrix::zeros(self.constrained_len(), self.unconstrained_len());
        let (mut c0, mut u0) = (0, 0);
        for block in &self.blocks {
            let cl = block.constrained_len();
            let ul = block.unconstrained_len();
            match block.transform {
                TransformKind::Identity => {
                    for k in 0..cl {
                        jac[(c0 + k, u0 + k)] = 1.0;
                    }
                }
                TransformKind::Log => {
                    for k in 0..cl {
                        jac[(c0 + k, u0 + k)] = constrained[c0 + k];
                    }
                }
                TransformKind::Simplex => {
                    let w = &constrained[c0..c0 + cl];
                    for k in 0..cl {
                        for m in 0..ul {
                            let delta = if k == m { 1.0 } else { 0.0 };
                            jac[(c0 + k, u0 + m)] = w[k] * (delta - w[m]);
                        }
                    }
                }
                TransformKind::CorrelationCholesky => {
                    let d = block.size;
                    let (u, norms) = normalised_rows(d, &unconstrained[u0..u0 + ul]);
                    for i in 1..d {
                        for j in 0..i {
                            let row = c0 + corr_index(i, j);
                            let rij = constrained[row];
                            for k in 0..i {
                                let col = u0 + corr_index(i, k);
                                jac[(row, col)] += (u[(j, k)] - rij * u[(i, k)]) / norms[i];
                            }
                            for k in 0..j {
                                let col = u0 + corr_index(j, k);
                                jac[(row, col)] += (u[(i, k)] - rij * u[(j, k)]) / norms[j];
                            }
                        }
                    }
                }
            }
            c0 += cl;
            u0 += ul;
        }
        Ok(jac)
    }
}

/// A point in hyperparameter space, carried in both coordinate systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "StoredParams")]
pub struct HyperParams {
    pub layout: ParamLayout,
    pub names: Vec<String>,
    pub constrained: Vec<f64>,
    pub unconstrained: Vec<f64>,
}

/// Stored form; names are rebuilt from the layout.
#[derive(Deserialize)]
struct StoredParams {
    layout: ParamLayout,
    constrained: Vec<f64>,
    unconstrained: Vec<f64>,
}

impl From<StoredParams> for HyperParams {
    fn from(s: StoredParams) -> Self {
        Self { names: s.layout.names(), layout: s.layout, constrained: s.constrained, unconstrained: s.unconstrained }
    }
}

impl HyperParams {
    pub fn from_constrained(layout: ParamLayout, constrained: Vec<f64>) -> Result<Self> {
        let unconstrained = layout.to_unconstrained(&constrained)?;
        // Re-derive so both vectors agree to the last bit.
        let constrained = layout.to_constrained(&unconstrained)?;
        let names = layout.names();
        Ok(Self { layout, names, constrained, unconstrained })
    }

    pub fn from_unconstrained(layout: ParamLayout, unconstrained: Vec<f64>) -> Result<Self> {
        let constrained = layout.to_constrained(&unconstrained)?;
        let names = layout.names();
        Ok(Self { layout, names, constrained, unconstrained })
    }

    pub fn with_unconstrained(&self, unconstrained: Vec<f64>) -> Result<Self> {
        Self::from_unconstrained(self.layout.clone(), unconstrained)
    }

    pub fn dof(&self) -> usize {
        self.unconstrained.len()
    }

    /// Constrained entries of the named block.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let idx = self.layout.block_index(name)?;
        let (c0, _) = self.layout.offsets(idx);
        Some(&self.constrained[c0..c0 + self.layout.blocks[idx].constrained_len()])
    }

    /// d constrained / d unconstrained at this point.
    pub fn transform_jacobian(&self) -> DMatrix<f64> {
        self.layout.jacobian(&self.unconstrained).expect("layout and vector agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> ParamLayout {
        ParamLayout::new(vec![
            ParamBlock::new("mu", TransformKind::Identity, 3),
            ParamBlock::new("var", TransformKind::Log, 3),
            ParamBlock::new("corr", TransformKind::CorrelationCholesky, 3),
            ParamBlock::new("w", TransformKind::Simplex, 3),
        ])
    }

    #[test]
    fn counts_and_names() {
        let l = layout();
        assert_eq!(l.constrained_len(), 3 + 3 + 3 + 3);
        assert_eq!(l.unconstrained_len(), 3 + 3 + 3 + 2);
        assert_eq!(l.names()[6..9], ["corr[2,1]", "corr[3,1]", "corr[3,2]"]);
    }

    #[test]
    fn identity_correlation_maps_to_zero() {
        let l = ParamLayout::new(vec![ParamBlock::new("R", TransformKind::CorrelationCholesky, 3)]);
        assert_eq!(l.to_unconstrained(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(l.to_unconstrained(&[0.99, 0.99, -0.99]).is_err());
    }

    #[test]
    fn jacobian_matches_differences() {
        let l = layout();
        let u = vec![0.3, -1.0, 2.0, 0.1, -0.4, 0.7, 0.5, -0.8, 1.1, 0.2, -0.6];
        let jac = l.jacobian(&u).unwrap();
        for m in 0..u.len() {
            let h = 1e-6;
            let mut up = u.clone();
            up[m] += h;
            let mut dn = u.clone();
            dn[m] -= h;
            let cp = l.to_constrained(&up).unwrap();
            let cm = l.to_constrained(&dn).unwrap();
            for k in 0..cp.len() {
                let fd = (cp[k] - cm[k]) / (2.0 * h);
                assert!((fd - jac[(k, m)]).abs() < 1e-8, "entry ({k},{m}): {fd} vs {}", jac[(k, m)]);
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(u in proptest::collection::vec(-2.0f64..2.0, 11)) {
            let l = layout();
            let c = l.to_constrained(&u).unwrap();
            let r = correlation_matrix(3, &c[6..9]);
            prop_assert!(r.clone().cholesky().is_some());
            prop_assert!((c[9..12].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let u2 = l.to_unconstrained(&c).unwrap();
            let c2 = l.to_constrained(&u2).unwrap();
            for (a, b) in c.iter().zip(&c2) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
