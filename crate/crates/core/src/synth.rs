//! Synthetic two-stage samples with a known regression function.
//!
//! First stage: each bag `i` gets a mean `θ_i ~ U([0.2, 0.8]^d)` and a label
//! `y_i = f_ρ(θ_i, s) + ε_i`, with Gaussian noise rejected until `|y_i| ≤ M`.
//! Second stage: `N` points from the isotropic Gaussian `N(θ_i, s² I)` truncated to
//! `[0, 1]^d` by per-coordinate rejection.
//!
//! Every bag draws from its own ChaCha stream seeded with `seed ^ i`; stream 0
//! feeds the first stage and stream 1 the second, so bags can be generated in any
//! order (or in parallel) and the second stage can be redrawn on its own.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{Bag, BagParams};
use crate::error::{Error, Result};

const THETA_LO: f64 = 0.2;
const THETA_HI: f64 = 0.8;
const MAX_ATTEMPTS: usize = 1_000_000;

/// Regression function families, ordered roughly by smoothness in the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFamily {
    /// `θ̄`, the average coordinate of the bag mean.
    LinearMean,
    /// average of `θ_k²`.
    QuadraticMean,
    /// `θ̄ + s² + avg (θ_k − 1/2)²`: mean plus the second moment about the cube centre.
    MeanPlusVariance,
    /// `sin(2π θ̄)/2 + θ̄²/2`.
    SmoothComposite,
}

impl TargetFamily {
    pub fn eval(self, theta: &[f64], s: f64) -> f64 {
        let d = theta.len() as f64;
        let mean = theta.iter().sum::<f64>() / d;
        match self {
            TargetFamily::LinearMean => mean,
            TargetFamily::QuadraticMean => theta.iter().map(|t| t * t).sum::<f64>() / d,
            TargetFamily::MeanPlusVariance => {
                mean + s * s + theta.iter().map(|t| (t - 0.5) * (t - 0.5)).sum::<f64>() / d
            }
            TargetFamily::SmoothComposite => {
                0.5 * (2.0 * std::f64::consts::PI * mean).sin() + 0.5 * mean * mean
            }
        }
    }

    /// Position on the qualitative smoothness ladder used by the saturation experiment.
    pub fn smoothness_rank(self) -> u8 {
        match self {
            TargetFamily::LinearMean => 0,
            TargetFamily::QuadraticMean => 1,
            TargetFamily::MeanPlusVariance => 1,
            TargetFamily::SmoothComposite => 2,
        }
    }
}

/// `f_ρ` evaluated on a bag's stored distribution parameters.
pub fn regression_value(target: TargetFamily, params: &BagParams) -> f64 {
    target.eval(&params.theta, params.s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDistributionSpec {
    pub dim: usize,
    /// Per-bag scale `s` of the truncated Gaussian.
    pub scale: f64,
    pub target: TargetFamily,
    pub noise_sd: f64,
    /// Label bound `M`.
    pub noise_bound: f64,
    pub seed: u64,
}

impl MetaDistributionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("synthetic base dimension must be at least 1"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config(format!(
                "bag scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config(format!(
                "noise_sd must be non-negative, got {}",
                self.noise_sd
            )));
        }
        if !(self.noise_bound > 0.0 && self.noise_bound.is_finite()) {
            return Err(Error::config(format!(
                "label bound M must be positive, got {}",
                self.noise_bound
            )));
        }
        Ok(())
    }
}

/// Labelled bags plus their noiseless regression values.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageDataset {
    pub bags: Vec<Bag>,
    pub targets: Vec<f64>,
}

impl TwoStageDataset {
    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.bags
            .iter()
            .map(|b| b.label.unwrap_or(f64::NAN))
            .collect()
    }

    /// Bags paired with their regression values, as consumed by `excess_error`.
    pub fn with_targets(&self) -> Vec<(Bag, f64)> {
        self.bags
            .iter()
            .cloned()
            .zip(self.targets.iter().copied())
            .collect()
    }
}

fn bag_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index as u64);
    rng.set_stream(stream);
    rng
}

fn truncated_unit(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> Result<f64> {
    for _ in 0..MAX_ATTEMPTS {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return Ok(v);
        }
    }
    Err(Error::Numerical(format!(
        "truncated sampling exceeded {MAX_ATTEMPTS} attempts"
    )))
}

fn draw_points(params: &BagParams, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let normals = params
        .theta
        .iter()
        .map(|&t| Normal::new(t, params.s).map_err(|e| Error::config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut coords = Vec::with_capacity(n * normals.len());
    for _ in 0..n {
        for normal in &normals {
            coords.push(truncated_unit(rng, normal)?);
        }
    }
    Ok(coords)
}

fn generate_bag(meta: &MetaDistributionSpec, i: usize, n: usize) -> Result<(Bag, f64)> {
    let mut first = bag_rng(meta.seed, i, 0);
    let theta: Vec<f64> = (0..meta.dim)
        .map(|_| first.random_range(THETA_LO..THETA_HI))
        .collect();
    let params = BagParams {
        theta,
        s: meta.scale,
    };
    let target = regression_value(meta.target, &params);
    if target.abs() > meta.noise_bound {
        return Err(Error::config(format!(
            "regression value {target} exceeds the label bound M = {}",
            meta.noise_bound
        )));
    }
    let label = if meta.noise_sd > 0.0 {
        let noise = Normal::new(0.0, meta.noise_sd).map_err(|e| Error::config(e.to_string()))?;
        let mut y = None;
        for _ in 0..MAX_ATTEMPTS {
            let cand = target + noise.sample(&mut first);
            if cand.abs() <= meta.noise_bound {
                y = Some(cand);
                break;
            }
        }
        y.ok_or_else(|| Error::Numerical("label truncation exceeded its attempt cap".into()))?
    } else {
        target
    };
    let mut second = bag_rng(meta.seed, i, 1);
    let coords = draw_points(&params, n, &mut second)?;
    let bag =
        Bag::from_flat(format!("bag-{i}"), coords, meta.dim, Some(label))?.with_params(params);
    Ok((bag, target))
}

/// Draws `m` bags of `n` points each.
pub fn generate(meta: &MetaDistributionSpec, m: usize, n: usize) -> Result<TwoStageDataset> {
    meta.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::input(format!(
            "need at least one bag and one point per bag, got m = {m}, N = {n}"
        )));
    }
    let drawn = (0..m)
        .into_par_iter()
        .map(|i| generate_bag(meta, i, n))
        .collect::<Result<Vec<_>>>()?;
    let (bags, targets) = drawn.into_iter().unzip();
    Ok(TwoStageDataset { bags, targets })
}

/// Redraws every bag's points from its stored parameters; labels are kept.
///
/// Bag `i` uses second-stage stream `seed ^ i`, so passing the generating seed
/// with the original `N` reproduces the original points.
pub fn resample_second_stage(
    dataset: &TwoStageDataset,
    n_new: usize,
    seed: u64,
) -> Result<TwoStageDataset> {
    if n_new == 0 {
        return Err(Error::input("second-stage sample size must be at least 1"));
    }
    let bags = dataset
        .bags
        .par_iter()
        .enumerate()
        .map(|(i, bag)| {
            let params = bag.params.as_ref().ok_or_else(|| {
                Error::input(format!(
                    "bag '{}' has no stored distribution parameters",
                    bag.id
                ))
            })?;
            let mut rng = bag_rng(seed, i, 1);
            let coords = draw_points(params, n_new, &mut rng)?;
            Ok(
                Bag::from_flat(bag.id.clone(), coords, bag.dim(), bag.label)?
                    .with_params(params.clone()),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TwoStageDataset {
        bags,
        targets: dataset.targets.clone(),
    })
}
