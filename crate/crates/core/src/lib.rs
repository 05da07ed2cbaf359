//! Distribution regression with coefficient-based ℓ² regularization.
//!
//! Bags of samples are embedded into an RKHS through an embedding kernel, an
//! outer kernel (possibly indefinite or asymmetric) is evaluated on the
//! embeddings, and the predictor `f(x) = Σ αⱼ K(x, xⱼ)` is fitted by penalizing
//! the coefficient vector directly. Kernel ridge regression is available as a
//! baseline for positive semi-definite kernels.

pub mod analysis;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod gram;
pub mod outer_kernel;
pub mod solver;
pub mod synth;

pub use embedding::{Bag, EmbeddingFamily, EmbeddingKernelSpec};
pub use error::{Error, Result};
pub use gram::{build_cross_gram, build_gram, spectrum, GramMatrix, SpectrumReport};
pub use outer_kernel::{KernelPair, OuterKernelSpec};
pub use solver::{fit_coefficient, fit_krr, CoefficientModel, FitReport, Scheme, Solution};
pub use synth::{generate, MetaDistributionSpec, TargetFamily, TwoStageDataset};
