//! Base-space kernels and the geometry of empirical mean embeddings.
//!
//! A bag `{x_1, ..., x_N}` is identified with its empirical mean embedding
//! `(1/N) Σ k(·, x_j)` in the RKHS of the embedding kernel `k`. Inner products and
//! distances between embeddings reduce to exact double sums of `k` over point pairs,
//! so the cost of [`embed_inner`] is `O(N_a · N_b · d)`.
//!
//! Every double sum is accumulated by pairwise summation in a canonical order (the
//! lexicographically smaller bag indexes the outer loop), which makes
//! `embed_inner(a, b)` and `embed_inner(b, a)` bitwise identical and keeps Gram
//! matrices independent of thread scheduling.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family on the base space. All three are bounded by `k(s, s) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFamily {
    /// `exp(-|s-t|² / (2 bw²))`
    Gaussian,
    /// `exp(-|s-t| / bw)`
    Exponential,
    /// `1 / (1 + |s-t|² / bw²)`
    Cauchy,
}

impl EmbeddingFamily {
    /// Hölder exponent `h` of the induced embedding map for this family.
    pub fn holder_exponent(self) -> f64 {
        match self {
            EmbeddingFamily::Gaussian | EmbeddingFamily::Cauchy => 1.0,
            EmbeddingFamily::Exponential => 0.5,
        }
    }
}

/// The embedding kernel `k` on `𝒳 ⊂ ℝ^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingKernelSpec {
    pub family: EmbeddingFamily,
    pub bandwidth: f64,
    pub dim: usize,
}

impl EmbeddingKernelSpec {
    pub fn new(family: EmbeddingFamily, bandwidth: f64, dim: usize) -> Result<Self> {
        let spec = EmbeddingKernelSpec {
            family,
            bandwidth,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(bandwidth: f64, dim: usize) -> Result<Self> {
        Self::new(EmbeddingFamily::Gaussian, bandwidth, dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::config(format!(
                "embedding bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.dim == 0 {
            return Err(Error::config("embedding dimension must be at least 1"));
        }
        Ok(())
    }

    /// Upper bound `B_k` on `k(s, s)`.
    pub fn bound(&self) -> f64 {
        1.0
    }

    #[inline]
    fn eval_unchecked(&self, s: &[f64], t: &[f64]) -> f64 {
        let sq: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let bw = self.bandwidth;
        match self.family {
            EmbeddingFamily::Gaussian => (-sq / (2.0 * bw * bw)).exp(),
            EmbeddingFamily::Exponential => (-sq.sqrt() / bw).exp(),
            EmbeddingFamily::Cauchy => 1.0 / (1.0 + sq / (bw * bw)),
        }
    }
}

/// Distribution parameters a synthetic bag was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagParams {
    pub theta: Vec<f64>,
    pub s: f64,
}

/// One second-stage sample: `N ≥ 1` points in `ℝ^d` and an optional label.
///
/// Points are stored flat, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BagRecord", into = "BagRecord")]
pub struct Bag {
    pub id: String,
    coords: Vec<f64>,
    dim: usize,
    pub label: Option<f64>,
    pub params: Option<BagParams>,
}

impl Bag {
    pub fn new(id: impl Into<String>, points: Vec<Vec<f64>>, label: Option<f64>) -> Result<Self> {
        let id = id.into();
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::input(format!("bag '{id}' has no points")))?;
        if dim == 0 {
            return Err(Error::input(format!(
                "bag '{id}' has zero-dimensional points"
            )));
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in &points {
            if p.len() != dim {
                return Err(Error::input(format!(
                    "bag '{id}' mixes point dimensions {dim} and {}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Ok(Bag {
            id,
            coords,
            dim,
            label,
            params: None,
        })
    }

    pub fn from_flat(
        id: impl Into<String>,
        coords: Vec<f64>,
        dim: usize,
        label: Option<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "bag '{id}': {} coordinates cannot form points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Bag {
            id,
            coords,
            dim,
            label,
            params: None,
        })
    }

    pub fn with_params(mut self, params: BagParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Total order on point multisets-as-stored, used to fix summation order.
    fn canonical_cmp(&self, other: &Bag) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then(self.coords.len().cmp(&other.coords.len()))
            .then_with(|| {
                self.coords
                    .iter()
                    .zip(&other.coords)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

/// On-disk form of a bag: one newline-delimited JSON record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BagRecord {
    pub id: String,
    #[serde(default)]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BagParams>,
    pub points: Vec<Vec<f64>>,
}

impl TryFrom<BagRecord> for Bag {
    type Error = Error;

    fn try_from(r: BagRecord) -> Result<Self> {
        let mut bag = Bag::new(r.id, r.points, r.y)?;
        bag.params = r.params;
        Ok(bag)
    }
}

impl From<Bag> for BagRecord {
    fn from(b: Bag) -> Self {
        let points = b.points().map(<[f64]>::to_vec).collect();
        BagRecord {
            id: b.id,
            y: b.label,
            params: b.params,
            points,
        }
    }
}

/// Pairwise (cascade) summation with a fixed split, so the result depends only on
/// the slice contents.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 8;
    if values.len() <= BASE {
        values.iter().sum()
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

fn check_dim(spec: &EmbeddingKernelSpec, len: usize) -> Result<()> {
    if len != spec.dim {
        return Err(Error::input(format!(
            "point dimension {len} does not match kernel dimension {}",
            spec.dim
        )));
    }
    Ok(())
}

fn check_bag(spec: &EmbeddingKernelSpec, bag: &Bag) -> Result<()> {
    if bag.is_empty() {
        return Err(Error::input(format!("bag '{}' is empty", bag.id)));
    }
    check_dim(spec, bag.dim())
}

/// Pointwise kernel value `k(s, t)`.
pub fn kernel_eval(spec: &EmbeddingKernelSpec, s: &[f64], t: &[f64]) -> Result<f64> {
    check_dim(spec, s.len())?;
    check_dim(spec, t.len())?;
    Ok(spec.eval_unchecked(s, t))
}

/// `⟨μ_a, μ_b⟩ = (1 / (N_a N_b)) Σ_i Σ_j k(a_i, b_j)`.
pub fn embed_inner(spec: &EmbeddingKernelSpec, a: &Bag, b: &Bag) -> Result<f64> {
    check_bag(spec, a)?;
    check_bag(spec, b)?;
    let (outer, inner) = match a.canonical_cmp(b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let mut row = Vec::with_capacity(inner.len());
    let row_sums: Vec<f64> = outer
        .points()
        .map(|s| {
            row.clear();
            row.extend(inner.points().map(|t| spec.eval_unchecked(s, t)));
            pairwise_sum(&row)
        })
        .collect();
    Ok(pairwise_sum(&row_sums) / (a.len() as f64 * b.len() as f64))
}

/// Squared RKHS distance from precomputed inner products, clamped at zero.
#[inline]
pub fn sq_dist_from_inner(aa: f64, bb: f64, ab: f64) -> f64 {
    (aa + bb - 2.0 * ab).max(0.0)
}

/// `‖μ_a − μ_b‖²` in the RKHS of `k`.
pub fn embed_sq_dist(spec: &EmbeddingKernelSpec, a: &Bag, b: &Bag) -> Result<f64> {
    let aa = embed_inner(spec, a, a)?;
    let bb = embed_inner(spec, b, b)?;
    let ab = embed_inner(spec, a, b)?;
    Ok(sq_dist_from_inner(aa, bb, ab))
}
