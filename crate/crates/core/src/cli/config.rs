//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! scheme = "coefficient_l2"        # or "krr"
//! m_values = [25, 50, 100, 200]    # sweep only
//! replications = 10
//!
//! [data.synth]                     # or: [data] path = "bags.jsonl"
//! dim = 1
//! scale = 0.1
//! target = "linear_mean"
//! noise_sd = 0.05
//! noise_bound = 2.0
//! m = 50
//! n = 100
//!
//! [embedding]
//! family = "gaussian"
//! bandwidth = 0.2
//!
//! [outer]
//! family = "gaussian_on_embedding"
//! sigma = 0.5
//!
//! [lambda]
//! mode = "grid"                    # "fixed" (value = ...) | "grid" | "schedule"
//!
//! [schedule]
//! r = 1.0
//! alpha = 2.0
//! h = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::{log_grid, LambdaMode, ScheduleParams, DEFAULT_HOLDOUT, DEFAULT_N_MAX};
use crate::embedding::{Bag, EmbeddingFamily, EmbeddingKernelSpec};
use crate::error::{Error, Result};
use crate::outer_kernel::{KernelPair, OuterKernelSpec};
use crate::solver::Scheme;
use crate::synth::{MetaDistributionSpec, TargetFamily};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub m_values: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Number of leading singular values used by the decay fit.
    #[serde(default = "default_head")]
    pub head: usize,
    pub data: DataConfig,
    pub embedding: EmbeddingConfig,
    pub outer: OuterKernelConfig,
    #[serde(default)]
    pub lambda: LambdaConfig,
    #[serde(default)]
    pub schedule: ScheduleParams,
}

fn default_scheme() -> Scheme {
    Scheme::CoefficientL2
}
fn default_replications() -> usize {
    10
}
fn default_n_max() -> usize {
    DEFAULT_N_MAX
}
fn default_n_test() -> usize {
    100
}
fn default_head() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    pub scale: f64,
    pub target: TargetFamily,
    #[serde(default)]
    pub noise_sd: f64,
    pub noise_bound: f64,
    /// Bag count and points per bag for commands that materialize one dataset.
    pub m: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub family: EmbeddingFamily,
    pub bandwidth: f64,
    /// Defaults to the data dimension.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OuterKernelConfig {
    GaussianOnEmbedding {
        sigma: f64,
    },
    LinearEmbedding,
    DogIndefinite {
        sigma1: f64,
        sigma2: f64,
        c: f64,
    },
    TanhIndefinite {
        scale: f64,
        offset: f64,
    },
    TiltedAsymmetric {
        sigma: f64,
        tilt: f64,
        reference_bag: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaConfig {
    Fixed {
        value: f64,
    },
    Grid {
        values: Option<Vec<f64>>,
        min: Option<f64>,
        max: Option<f64>,
        count: Option<usize>,
        holdout: Option<f64>,
    },
    Schedule,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig::Grid {
            values: None,
            min: None,
            max: None,
            count: None,
            holdout: None,
        }
    }
}

impl LambdaConfig {
    pub fn resolve(&self) -> Result<LambdaMode> {
        let mode = match self {
            LambdaConfig::Fixed { value } => LambdaMode::Fixed { value: *value },
            LambdaConfig::Schedule => LambdaMode::Schedule,
            LambdaConfig::Grid {
                values,
                min,
                max,
                count,
                holdout,
            } => {
                let holdout = holdout.unwrap_or(DEFAULT_HOLDOUT);
                let values = match values {
                    Some(v) => {
                        if min.is_some() || max.is_some() || count.is_some() {
                            return Err(Error::config(
                                "lambda grid: give either values or min/max/count, not both",
                            ));
                        }
                        v.clone()
                    }
                    None => log_grid(min.unwrap_or(1e-9), max.unwrap_or(1.0), count.unwrap_or(10)),
                };
                LambdaMode::Grid { values, holdout }
            }
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        match (&cfg.data.path, &cfg.data.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "[data] must give exactly one of path or synth, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "[data] must give a bag file path or a synth section",
                ))
            }
            _ => {}
        }
        Ok(cfg)
    }

    /// Resolves the synthetic meta-distribution; `seed` (from the command line) wins
    /// over the config value, and one of them is required.
    pub fn meta(&self, seed: Option<u64>) -> Result<MetaDistributionSpec> {
        let synth = self
            .data
            .synth
            .as_ref()
            .ok_or_else(|| Error::config("this command needs a [data.synth] section"))?;
        let seed = seed.or(self.seed).ok_or_else(|| {
            Error::config("a seed is mandatory for synthetic data (config `seed` or --seed)")
        })?;
        let meta = MetaDistributionSpec {
            dim: synth.dim,
            scale: synth.scale,
            target: synth.target,
            noise_sd: synth.noise_sd,
            noise_bound: synth.noise_bound,
            seed,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn embedding_spec(&self, data_dim: usize) -> Result<EmbeddingKernelSpec> {
        let dim = self.embedding.dim.unwrap_or(data_dim);
        if dim != data_dim {
            return Err(Error::input(format!(
                "embedding dimension {dim} does not match data dimension {data_dim}"
            )));
        }
        EmbeddingKernelSpec::new(self.embedding.family, self.embedding.bandwidth, dim)
    }

    /// Builds the kernel pair, resolving a tilt reference bag id against `bags`.
    pub fn kernel(&self, data_dim: usize, bags: &[Bag]) -> Result<KernelPair> {
        let outer = match &self.outer {
            OuterKernelConfig::GaussianOnEmbedding { sigma } => {
                OuterKernelSpec::GaussianOnEmbedding { sigma: *sigma }
            }
            OuterKernelConfig::LinearEmbedding => OuterKernelSpec::LinearEmbedding,
            OuterKernelConfig::DogIndefinite { sigma1, sigma2, c } => {
                OuterKernelSpec::DogIndefinite {
                    sigma1: *sigma1,
                    sigma2: *sigma2,
                    c: *c,
                }
            }
            OuterKernelConfig::TanhIndefinite { scale, offset } => {
                OuterKernelSpec::TanhIndefinite {
                    scale: *scale,
                    offset: *offset,
                }
            }
            OuterKernelConfig::TiltedAsymmetric {
                sigma,
                tilt,
                reference_bag,
            } => {
                let id = reference_bag
                    .as_ref()
                    .ok_or_else(|| Error::config("tilted_asymmetric requires reference_bag"))?;
                let reference = bags.iter().find(|b| &b.id == id).cloned().ok_or_else(|| {
                    Error::config(format!("reference bag '{id}' not found in the data"))
                })?;
                OuterKernelSpec::TiltedAsymmetric {
                    sigma: *sigma,
                    tilt: *tilt,
                    reference: Some(reference),
                }
            }
        };
        KernelPair::new(outer, self.embedding_spec(data_dim)?)
    }

    pub fn needs_reference_bag(&self) -> bool {
        matches!(self.outer, OuterKernelConfig::TiltedAsymmetric { .. })
    }
}
