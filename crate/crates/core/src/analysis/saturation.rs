//! Coefficient scheme versus KRR on a shared λ grid.

use serde::{Deserialize, Serialize};

use crate::embedding::Bag;
use crate::error::{Error, Result};
use crate::gram::EmbeddingTable;
use crate::outer_kernel::KernelPair;
use crate::solver::{fit_scheme, labels, rms_error, Scheme, KRR_CONTRACT};
use crate::synth::{generate, MetaDistributionSpec};

use super::experiment::select_lambda;

/// When both excess errors are at or below this, the comparison is a tie with ratio 1.
pub const TIE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Coefficient,
    Krr,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub err_coefficient: f64,
    pub err_krr: f64,
    pub lambda_grid: Vec<f64>,
    pub lambda_coefficient: f64,
    pub lambda_krr: f64,
    /// `err_coefficient / err_krr`.
    pub ratio: f64,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationConfig {
    pub meta: MetaDistributionSpec,
    pub kernel: KernelPair,
    pub m: usize,
    pub n: usize,
    pub n_test: usize,
    pub lambda_grid: Vec<f64>,
    pub holdout: f64,
}

fn check_psd(kernel: &KernelPair) -> Result<()> {
    if kernel.outer.psd_claimed() && kernel.outer.symmetric() {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "{KRR_CONTRACT}; the saturation comparison cannot use '{}'",
            kernel.outer.name()
        )))
    }
}

/// Held-out λ selection and refit for both schemes on the same data, scored on
/// `test` bags against their regression values.
pub fn compare_schemes(
    kernel: &KernelPair,
    train: &[Bag],
    test: &[(Bag, f64)],
    lambda_grid: &[f64],
    holdout: f64,
) -> Result<SaturationReport> {
    check_psd(kernel)?;
    if test.is_empty() {
        return Err(Error::input("saturation comparison needs test bags"));
    }
    let y = labels(train)?;
    let m = train.len();
    let mut bags: Vec<Bag> = train.to_vec();
    bags.extend(test.iter().map(|(b, _)| b.clone()));
    let targets: Vec<f64> = test.iter().map(|(_, t)| *t).collect();
    let table = EmbeddingTable::compute(kernel, &bags)?;
    let train_idx: Vec<usize> = (0..m).collect();
    let test_idx: Vec<usize> = (m..bags.len()).collect();
    let gram = table.gram(kernel, &train_idx);
    let cross = table.block(&kernel.outer, &test_idx, &train_idx);

    let score = |scheme: Scheme| -> Result<(f64, f64)> {
        let lambda = select_lambda(&table, kernel, scheme, &train_idx, &y, lambda_grid, holdout)?;
        let (sol, _) = fit_scheme(scheme, &gram, &y, lambda)?;
        let pred = &cross * &sol.alpha;
        Ok((rms_error(pred.as_slice(), &targets)?, lambda))
    };
    let (err_coefficient, lambda_coefficient) = score(Scheme::CoefficientL2)?;
    let (err_krr, lambda_krr) = score(Scheme::Krr)?;

    let (ratio, winner) = if err_coefficient.max(err_krr) <= TIE_FLOOR {
        (1.0, Winner::Tie)
    } else {
        let ratio = err_coefficient / err_krr;
        let winner = match err_coefficient.total_cmp(&err_krr) {
            std::cmp::Ordering::Less => Winner::Coefficient,
            std::cmp::Ordering::Greater => Winner::Krr,
            std::cmp::Ordering::Equal => Winner::Tie,
        };
        (ratio, winner)
    };
    Ok(SaturationReport {
        err_coefficient,
        err_krr,
        lambda_grid: lambda_grid.to_vec(),
        lambda_coefficient,
        lambda_krr,
        ratio,
        winner,
    })
}

/// Generates training and test data from `config.meta` and compares the schemes.
pub fn saturation_compare(config: &SaturationConfig) -> Result<SaturationReport> {
    check_psd(&config.kernel)?;
    let train = generate(&config.meta, config.m, config.n)?;
    let test_meta = MetaDistributionSpec {
        seed: config.meta.seed.wrapping_add(0x5EED),
        ..config.meta.clone()
    };
    let test = generate(&test_meta, config.n_test, config.n)?;
    compare_schemes(
        &config.kernel,
        &train.bags,
        &test.with_targets(),
        &config.lambda_grid,
        config.holdout,
    )
}
