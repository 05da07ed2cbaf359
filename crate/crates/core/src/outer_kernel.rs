//! Kernels `K` acting on mean embeddings.
//!
//! Every family is a function of the embedding geometry only: the self inner
//! products `⟨μ_a, μ_a⟩`, `⟨μ_b, μ_b⟩`, the cross term `⟨μ_a, μ_b⟩` and, for the
//! tilted family, `⟨μ_a, μ_ref⟩`. Gram assembly caches those quantities and calls
//! [`OuterKernelSpec::eval_geometry`], which is also what [`outer_eval`] uses, so
//! the cached and scalar paths agree bitwise.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{embed_inner, sq_dist_from_inner, Bag, EmbeddingKernelSpec};
use crate::error::{Error, Result};

/// Tolerance under which a kernel is considered numerically symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OuterKernelSpec {
    /// `exp(-D² / (2σ²))` with `D² = ‖μ_a − μ_b‖²`. PSD.
    GaussianOnEmbedding { sigma: f64 },
    /// `⟨μ_a, μ_b⟩`. PSD.
    LinearEmbedding,
    /// `exp(-D² / (2σ₁²)) − c · exp(-D² / (2σ₂²))`. Symmetric, indefinite.
    DogIndefinite { sigma1: f64, sigma2: f64, c: f64 },
    /// `tanh(scale · ⟨μ_a, μ_b⟩ + offset)`. Symmetric, indefinite.
    TanhIndefinite { scale: f64, offset: f64 },
    /// `exp(-D² / (2σ²)) · (1 + tilt · ⟨μ_a, μ_ref⟩)`; the tilt only sees the first
    /// argument, so the kernel is asymmetric whenever `tilt > 0`.
    TiltedAsymmetric {
        sigma: f64,
        tilt: f64,
        #[serde(default)]
        reference: Option<Bag>,
    },
}

/// Embedding-geometry inputs of one kernel evaluation `K(a, b)`.
#[derive(Debug, Clone, Copy)]
pub struct PairGeometry {
    pub aa: f64,
    pub bb: f64,
    pub ab: f64,
    /// `⟨μ_a, μ_ref⟩`; only read by the tilted family.
    pub a_ref: f64,
}

impl OuterKernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OuterKernelSpec::GaussianOnEmbedding { .. } => "gaussian_on_embedding",
            OuterKernelSpec::LinearEmbedding => "linear_embedding",
            OuterKernelSpec::DogIndefinite { .. } => "dog_indefinite",
            OuterKernelSpec::TanhIndefinite { .. } => "tanh_indefinite",
            OuterKernelSpec::TiltedAsymmetric { .. } => "tilted_asymmetric",
        }
    }

    pub fn symmetric(&self) -> bool {
        !matches!(self, OuterKernelSpec::TiltedAsymmetric { .. })
    }

    pub fn psd_claimed(&self) -> bool {
        matches!(
            self,
            OuterKernelSpec::GaussianOnEmbedding { .. } | OuterKernelSpec::LinearEmbedding
        )
    }

    pub fn reference(&self) -> Option<&Bag> {
        match self {
            OuterKernelSpec::TiltedAsymmetric { reference, .. } => reference.as_ref(),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "outer kernel parameter {name} must be positive, got {v}"
                )))
            }
        }
        match self {
            OuterKernelSpec::GaussianOnEmbedding { sigma } => positive("sigma", *sigma),
            OuterKernelSpec::LinearEmbedding => Ok(()),
            OuterKernelSpec::DogIndefinite { sigma1, sigma2, c } => {
                positive("sigma1", *sigma1)?;
                positive("sigma2", *sigma2)?;
                positive("c", *c)?;
                if sigma1 == sigma2 {
                    return Err(Error::config("dog_indefinite requires sigma1 != sigma2"));
                }
                Ok(())
            }
            OuterKernelSpec::TanhIndefinite { scale, offset } => {
                positive("scale", *scale)?;
                positive("offset", *offset)
            }
            OuterKernelSpec::TiltedAsymmetric {
                sigma,
                tilt,
                reference,
            } => {
                positive("sigma", *sigma)?;
                // tilt = 0 is accepted: it collapses to the symmetric Gaussian.
                if !(*tilt >= 0.0 && tilt.is_finite()) {
                    return Err(Error::config(format!(
                        "tilt must be non-negative, got {tilt}"
                    )));
                }
                if reference.is_none() {
                    return Err(Error::config("tilted_asymmetric requires a reference bag"));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn eval_geometry(&self, g: PairGeometry) -> f64 {
        let gauss =
            |sigma: f64| (-sq_dist_from_inner(g.aa, g.bb, g.ab) / (2.0 * sigma * sigma)).exp();
        match *self {
            OuterKernelSpec::GaussianOnEmbedding { sigma } => gauss(sigma),
            OuterKernelSpec::LinearEmbedding => g.ab,
            OuterKernelSpec::DogIndefinite { sigma1, sigma2, c } => {
                gauss(sigma1) - c * gauss(sigma2)
            }
            OuterKernelSpec::TanhIndefinite { scale, offset } => (scale * g.ab + offset).tanh(),
            OuterKernelSpec::TiltedAsymmetric { sigma, tilt, .. } => {
                gauss(sigma) * (1.0 + tilt * g.a_ref)
            }
        }
    }
}

/// The outer kernel together with the embedding kernel it is evaluated through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub outer: OuterKernelSpec,
    pub embedding: EmbeddingKernelSpec,
}

impl KernelPair {
    pub fn new(outer: OuterKernelSpec, embedding: EmbeddingKernelSpec) -> Result<Self> {
        outer.validate()?;
        embedding.validate()?;
        if let Some(r) = outer.reference() {
            if r.dim() != embedding.dim {
                return Err(Error::config(format!(
                    "reference bag '{}' has dimension {} but the embedding kernel expects {}",
                    r.id,
                    r.dim(),
                    embedding.dim
                )));
            }
        }
        Ok(KernelPair { outer, embedding })
    }

    /// Short SHA-256 digest of the serialized kernel pair.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("kernel specs serialize");
        Sha256::digest(&json)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `⟨μ_bag, μ_ref⟩`, or 0 for kernels without a reference bag.
    pub fn reference_inner(&self, bag: &Bag) -> Result<f64> {
        match self.outer.reference() {
            Some(r) => embed_inner(&self.embedding, bag, r),
            None => Ok(0.0),
        }
    }
}

/// `K(μ_a, μ_b)` with `a` in the first slot.
pub fn outer_eval(
    kspec: &OuterKernelSpec,
    espec: &EmbeddingKernelSpec,
    a: &Bag,
    b: &Bag,
) -> Result<f64> {
    kspec.validate()?;
    let pair = KernelPair {
        outer: kspec.clone(),
        embedding: *espec,
    };
    let geometry = PairGeometry {
        aa: embed_inner(espec, a, a)?,
        bb: embed_inner(espec, b, b)?,
        ab: embed_inner(espec, a, b)?,
        a_ref: pair.reference_inner(a)?,
    };
    Ok(kspec.eval_geometry(geometry))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryCheck {
    pub max_asymmetry: f64,
    pub symmetric: bool,
}

/// Largest `|K(i, j) − K(j, i)|` over all bag pairs.
pub fn check_symmetry(
    kspec: &OuterKernelSpec,
    espec: &EmbeddingKernelSpec,
    bags: &[Bag],
) -> Result<SymmetryCheck> {
    if bags.len() < 2 {
        return Err(Error::input("symmetry check needs at least two bags"));
    }
    let mut max_asymmetry = 0.0f64;
    for (i, a) in bags.iter().enumerate() {
        for b in &bags[i + 1..] {
            let d = (outer_eval(kspec, espec, a, b)? - outer_eval(kspec, espec, b, a)?).abs();
            max_asymmetry = max_asymmetry.max(d);
        }
    }
    Ok(SymmetryCheck {
        max_asymmetry,
        symmetric: max_asymmetry <= SYMMETRY_TOL,
    })
}
