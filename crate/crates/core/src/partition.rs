//! Rectangular and discrete partitions of the outcome space.
//!
//! Bins are products of half-open intervals `(lower, upper]`. Discrete
//! outcomes are represented by singleton atoms. Unbounded edges are written
//! as the strings `"-inf"` / `"inf"` in JSON.

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serde helpers for extended reals (`"inf"`, `"-inf"` or a number).
pub mod ext_real {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Scalar {
        Num(f64),
        Text(String),
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Scalar),
        Many(Vec<Scalar>),
    }

    fn decode<E: de::Error>(s: Scalar) -> Result<f64, E> {
        match s {
            Scalar::Num(v) => Ok(v),
            Scalar::Text(t) => match t.trim() {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse::<f64>()
                    .map_err(|_| E::custom(format!("invalid extended real `{other}`"))),
            },
        }
    }

    pub fn encode(v: f64) -> serde_json::Value {
        if v == f64::INFINITY {
            "inf".into()
        } else if v == f64::NEG_INFINITY {
            "-inf".into()
        } else {
            v.into()
        }
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for &v in values {
            seq.serialize_element(&encode(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        match OneOrMany::deserialize(d)? {
            OneOrMany::One(s) => Ok(vec![decode(s)?]),
            OneOrMany::Many(v) => v.into_iter().map(decode).collect(),
        }
    }

    pub mod scalar {
        use super::*;
        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            encode(*v).serialize(s)
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            decode(Scalar::deserialize(d)?)
        }
    }

    pub mod atoms {
        use super::*;
        pub fn serialize<S: Serializer>(atoms: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(atoms.len()))?;
            for a in atoms {
                let enc: Vec<serde_json::Value> = a.iter().map(|&v| encode(v)).collect();
                seq.serialize_element(&enc)?;
            }
            seq.end()
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let raw = Vec::<OneOrMany>::deserialize(d)?;
            raw.into_iter()
                .map(|a| match a {
                    OneOrMany::One(s) => Ok(vec![decode(s)?]),
                    OneOrMany::Many(v) => v.into_iter().map(decode).collect(),
                })
                .collect()
        }
    }
}

pub(crate) use ext_real::encode as encode_ext_real;
pub(crate) use ext_real::scalar as ext_real_scalar;

/// A rectangle `⨉_s (lower_s, upper_s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    #[serde(with = "ext_real")]
    pub lower: Vec<f64>,
    #[serde(with = "ext_real")]
    pub upper: Vec<f64>,
}

impl Bin {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn interval(lower: f64, upper: f64) -> Self {
        Self { lower: vec![lower], upper: vec![upper] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn check(&self, index: usize) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::InvalidBin { index, reason: "edge vectors differ in length".into() });
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if l.is_nan() || u.is_nan() || !(l < u) {
                return Err(Error::InvalidBin { index, reason: format!("needs lower < upper, got ({l}, {u}]") });
            }
        }
        Ok(())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&y, (&l, &u))| y > l && y <= u)
    }

    fn intersects(&self, other: &Bin) -> bool {
        (0..self.dim()).all(|s| self.lower[s].max(other.lower[s]) < self.upper[s].min(other.upper[s]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Partition {
    Bins { bins: Vec<Bin> },
    Atoms {
        #[serde(with = "ext_real::atoms")]
        atoms: Vec<Vec<f64>>,
    },
}

impl Partition {
    /// One-dimensional partition from consecutive edges, e.g.
    /// `[-inf, 0, inf]` gives `(-inf, 0]` and `(0, inf]`.
    pub fn from_edges(edges: &[f64]) -> Self {
        Partition::Bins { bins: edges.windows(2).map(|w| Bin::interval(w[0], w[1])).collect() }
    }

    pub fn atoms_1d(points: &[f64]) -> Self {
        Partition::Atoms { atoms: points.iter().map(|&p| vec![p]).collect() }
    }

    pub fn len(&self) -> usize {
        match self {
            Partition::Bins { bins } => bins.len(),
            Partition::Atoms { atoms } => atoms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Partition::Atoms { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            Partition::Bins { bins } => bins.first().map_or(0, Bin::dim),
            Partition::Atoms { atoms } => atoms.first().map_or(0, Vec::len),
        }
    }

    /// Index of the cell containing `point`, if any.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        match self {
            Partition::Bins { bins } => bins.iter().position(|b| b.contains(point)),
            Partition::Atoms { atoms } => atoms.iter().position(|a| a.as_slice() == point),
        }
    }

    /// The 1-D bins as `(lower, upper)` pairs; `None` for atoms or S > 1.
    pub fn intervals(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Partition::Bins { bins } if bins.iter().all(|b| b.dim() == 1) => {
                Some(bins.iter().map(|b| (b.lower[0], b.upper[0])).collect())
            }
            _ => None,
        }
    }

    /// Reorders cells so that `out[k] = self[order[k]]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        match self {
            Partition::Bins { bins } => Partition::Bins { bins: order.iter().map(|&i| bins[i].clone()).collect() },
            Partition::Atoms { atoms } => Partition::Atoms { atoms: order.iter().map(|&i| atoms[i].clone()).collect() },
        }
    }
}

/// The outcome space Ω that a partition must cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleSpace {
    /// ℝ^dim
    Real { dim: usize },
    /// ⨉_s (lower_s, upper_s]
    Box {
        #[serde(with = "ext_real")]
        lower: Vec<f64>,
        #[serde(with = "ext_real")]
        upper: Vec<f64>,
    },
    Discrete {
        #[serde(with = "ext_real::atoms")]
        points: Vec<Vec<f64>>,
    },
}

impl SampleSpace {
    pub fn positive_half_line() -> Self {
        SampleSpace::Box { lower: vec![0.0], upper: vec![f64::INFINITY] }
    }

    pub fn dim(&self) -> usize {
        match self {
            SampleSpace::Real { dim } => *dim,
            SampleSpace::Box { lower, .. } => lower.len(),
            SampleSpace::Discrete { points } => points.first().map_or(0, Vec::len),
        }
    }

    /// Per-coordinate `(lower, upper)`; `None` for discrete spaces.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            SampleSpace::Real { dim } => Some((vec![f64::NEG_INFINITY; *dim], vec![f64::INFINITY; *dim])),
            SampleSpace::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            SampleSpace::Discrete { .. } => None,
        }
    }
}

/// A partition that passed [`validate_partition`], in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckedPartition {
    pub partition: Partition,
    /// `order[k]` is the caller's index of canonical cell `k`.
    pub order: Vec<usize>,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Checks that the cells are pairwise disjoint and exhaust `space`, and
/// returns them sorted lexicographically by lower corner.
///
/// Coverage of rectangles is checked on the lattice spanned by every bin
/// edge: each elementary lattice cell inside the space must be contained in
/// some bin.
pub fn validate_partition(partition: &Partition, space: &SampleSpace) -> Result<CheckedPartition> {
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let dim = space.dim();
    match partition {
        Partition::Atoms { atoms } => {
            let SampleSpace::Discrete { points } = space else {
                return Err(Error::SpaceMismatch("atoms need a discrete sample space".into()));
            };
            for (i, a) in atoms.iter().enumerate() {
                if a.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: a.len() });
                }
                if !points.contains(a) {
                    return Err(Error::OutsideSampleSpace { index: i });
                }
                if let Some(j) = atoms[..i].iter().position(|b| b == a) {
                    return Err(Error::OverlappingBins { first: j, second: i });
                }
            }
            if let Some(missing) = points.iter().find(|p| !atoms.contains(p)) {
                return Err(Error::CoverageGap { lower: missing.clone(), upper: missing.clone() });
            }
            let mut order: Vec<usize> = (0..atoms.len()).collect();
            order.sort_by(|&i, &j| lex_cmp(&atoms[i], &atoms[j]));
            Ok(CheckedPartition { partition: partition.permuted(&order), order })
        }
        Partition::Bins { bins } => {
            let Some((lo, hi)) = space.bounds() else {
                return Err(Error::SpaceMismatch("rectangles need a continuous sample space".into()));
            };
            for (i, b) in bins.iter().enumerate() {
                b.check(i)?;
                if b.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: b.dim() });
                }
                if (0..dim).any(|s| b.lower[s] < lo[s] || b.upper[s] > hi[s]) {
                    return Err(Error::OutsideSampleSpace { index: i });
                }
            }
            for i in 0..bins.len() {
                for j in 0..i {
                    if bins[i].intersects(&bins[j]) {
                        return Err(Error::OverlappingBins { first: j, second: i });
                    }
                }
            }
            check_coverage(bins, &lo, &hi)?;
            let mut order: Vec<usize> = (0..bins.len()).collect();
            order.sort_by(|&i, &j| lex_cmp(&bins[i].lower, &bins[j].lower).then(lex_cmp(&bins[i].upper, &bins[j].upper)));
            Ok(CheckedPartition { partition: partition.permuted(&order), order })
        }
    }
}

fn check_coverage(bins: &[Bin], lo: &[f64], hi: &[f64]) -> Result<()> {
    let dim = lo.len();
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|s| {
            let mut edges: Vec<f64> = bins
                .iter()
                .flat_map(|b| [b.lower[s], b.upper[s]])
                .chain([lo[s], hi[s]])
                .filter(|&e| e >= lo[s] && e <= hi[s])
                .collect();
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            edges
        })
        .collect();
    let counts: Vec<usize> = axes.iter().map(|a| a.len() - 1).collect();
    let mut idx = vec![0usize; dim];
    loop {
        let cell_lo: Vec<f64> = (0..dim).map(|s| axes[s][idx[s]]).collect();
        let cell_hi: Vec<f64> = (0..dim).map(|s| axes[s][idx[s] + 1]).collect();
        let covered = bins
            .iter()
            .any(|b| (0..dim).all(|s| b.lower[s] <= cell_lo[s] && cell_hi[s] <= b.upper[s]));
        if !covered {
            return Err(Error::CoverageGap { lower: cell_lo, upper: cell_hi });
        }
        let mut s = 0;
        loop {
            if s == dim {
                return Ok(());
            }
            idx[s] += 1;
            if idx[s] < counts[s] {
                break;
            }
            idx[s] = 0;
            s += 1;
        }
    }
}
