//! The two estimators and prediction.
//!
//! * ℓ² coefficient regularization: minimize `(1/m)‖K̂α − y‖² + λm‖α‖²`, i.e. solve
//!   `(λm² I + K̂ᵀK̂) α = K̂ᵀy`. The system matrix is SPD for any real `K̂` and `λ > 0`,
//!   so indefinite and asymmetric outer kernels are fine.
//! * KRR: `(λm I + K̂) α = y`, which needs a symmetric PSD `K̂`.
//!
//! Both systems are solved by Cholesky with up to two steps of iterative refinement.
//! Predictions evaluate `f(μ) = Σ_i α_i K(μ, μ_i)` with the query in the first slot.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::embedding::Bag;
use crate::error::{Error, Result};
use crate::gram::{cross_gram_with, EmbeddingTable, GramMatrix};
use crate::outer_kernel::KernelPair;

/// Condition estimates above this are logged as a warning.
pub const CONDITION_WARN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(alias = "coefficient")]
    CoefficientL2,
    Krr,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::CoefficientL2 => "coefficient_l2",
            Scheme::Krr => "krr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub objective_value: f64,
    /// Relative residual of the normal equations that were solved.
    pub residual_norm: f64,
    pub condition_estimate: f64,
    pub wall_time: f64,
}

/// Fitted coefficient vector, before training bags are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub scheme: Scheme,
    pub lambda: f64,
    pub alpha: DVector<f64>,
}

fn check_problem(g: &GramMatrix, y: &[f64], lambda: f64) -> Result<usize> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !g.is_square() {
        return Err(Error::input(format!(
            "Gram matrix must be square, got {}x{}",
            g.values.nrows(),
            g.values.ncols()
        )));
    }
    let m = g.dim();
    if m == 0 {
        return Err(Error::input("empty training set"));
    }
    if y.len() != m {
        return Err(Error::input(format!(
            "{} labels for {m} training bags",
            y.len()
        )));
    }
    Ok(m)
}

/// Solves an SPD system; returns the solution, relative residual and a cheap
/// condition estimate from the Cholesky diagonal.
fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64, f64)> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(a.clone()).ok_or_else(|| {
        Error::Numerical("Cholesky factorization failed: system is not positive definite".into())
    })?;
    let b_norm = b.norm();
    let mut x = chol.solve(b);
    let mut residual = b - a * &x;
    for _ in 0..2 {
        if residual.norm() <= 1e-15 * b_norm {
            break;
        }
        x += chol.solve(&residual);
        residual = b - a * &x;
    }
    let rel = if b_norm > 0.0 {
        residual.norm() / b_norm
    } else {
        residual.norm()
    };
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d), hi.max(d))
    });
    let cond = (hi / lo).powi(2);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(
            "solution contains non-finite values".into(),
        ));
    }
    Ok((x, rel, cond))
}

/// `(1/m)‖K̂α − y‖² + λm‖α‖²`.
pub fn coefficient_objective(
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let m = k.nrows() as f64;
    (k * alpha - y).norm_squared() / m + lambda * m * alpha.norm_squared()
}

/// `(1/m)‖K̂α − y‖² + λ αᵀK̂α`.
pub fn krr_objective(k: &DMatrix<f64>, y: &DVector<f64>, alpha: &DVector<f64>, lambda: f64) -> f64 {
    let m = k.nrows() as f64;
    (k * alpha - y).norm_squared() / m + lambda * alpha.dot(&(k * alpha))
}

fn finish(
    report: (DVector<f64>, f64, f64),
    objective: f64,
    started: Instant,
) -> (DVector<f64>, FitReport) {
    let (alpha, residual_norm, condition_estimate) = report;
    if condition_estimate > CONDITION_WARN {
        log::warn!("ill-conditioned system: condition estimate {condition_estimate:.3e}");
    }
    let report = FitReport {
        objective_value: objective.max(0.0),
        residual_norm,
        condition_estimate,
        wall_time: started.elapsed().as_secs_f64(),
    };
    (alpha, report)
}

/// ℓ² coefficient-regularized fit; valid for any real Gram matrix.
pub fn fit_coefficient(g: &GramMatrix, y: &[f64], lambda: f64) -> Result<(Solution, FitReport)> {
    let started = Instant::now();
    let m = check_problem(g, y, lambda)?;
    let k = &g.values;
    let y = DVector::from_column_slice(y);
    let mut system = k.tr_mul(k);
    let ridge = lambda * (m * m) as f64;
    for i in 0..m {
        system[(i, i)] += ridge;
    }
    let rhs = k.tr_mul(&y);
    let solved = spd_solve(&system, &rhs)?;
    let objective = coefficient_objective(k, &y, &solved.0, lambda);
    let (alpha, report) = finish(solved, objective, started);
    Ok((
        Solution {
            scheme: Scheme::CoefficientL2,
            lambda,
            alpha,
        },
        report,
    ))
}

pub const KRR_CONTRACT: &str = "KRR requires positive semi-definite K";

/// Kernel ridge regression baseline; only for symmetric PSD outer kernels.
pub fn fit_krr(g: &GramMatrix, y: &[f64], lambda: f64) -> Result<(Solution, FitReport)> {
    let started = Instant::now();
    if let Some(kernel) = &g.kernel {
        if !(kernel.outer.psd_claimed() && kernel.outer.symmetric()) {
            return Err(Error::contract(format!(
                "{KRR_CONTRACT}; outer kernel '{}' is not a symmetric positive semi-definite family",
                kernel.outer.name()
            )));
        }
    }
    let m = check_problem(g, y, lambda)?;
    if g.kernel.is_none() && !g.is_symmetric() {
        return Err(Error::contract(format!(
            "{KRR_CONTRACT}; supplied Gram matrix is not symmetric"
        )));
    }
    let k = &g.values;
    let y = DVector::from_column_slice(y);
    let mut system = (k + k.transpose()) * 0.5;
    let ridge = lambda * m as f64;
    for i in 0..m {
        system[(i, i)] += ridge;
    }
    let solved = spd_solve(&system, &y).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} ({KRR_CONTRACT})")),
        other => other,
    })?;
    let objective = krr_objective(k, &y, &solved.0, lambda);
    let (alpha, report) = finish(solved, objective, started);
    Ok((
        Solution {
            scheme: Scheme::Krr,
            lambda,
            alpha,
        },
        report,
    ))
}

pub fn fit_scheme(
    scheme: Scheme,
    g: &GramMatrix,
    y: &[f64],
    lambda: f64,
) -> Result<(Solution, FitReport)> {
    match scheme {
        Scheme::CoefficientL2 => fit_coefficient(g, y, lambda),
        Scheme::Krr => fit_krr(g, y, lambda),
    }
}

/// A fitted estimator with everything needed to predict on new bags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub scheme: Scheme,
    pub lambda: f64,
    pub kernel: KernelPair,
    pub alpha: Vec<f64>,
    pub train_bags: Vec<Bag>,
}

impl CoefficientModel {
    pub fn from_solution(
        solution: Solution,
        kernel: KernelPair,
        train_bags: Vec<Bag>,
    ) -> Result<Self> {
        if solution.alpha.len() != train_bags.len() {
            return Err(Error::input(format!(
                "{} coefficients for {} training bags",
                solution.alpha.len(),
                train_bags.len()
            )));
        }
        Ok(CoefficientModel {
            scheme: solution.scheme,
            lambda: solution.lambda,
            kernel,
            alpha: solution.alpha.iter().copied().collect(),
            train_bags,
        })
    }

    /// Builds the training Gram from labelled bags and fits `scheme`.
    pub fn fit(
        kernel: KernelPair,
        bags: Vec<Bag>,
        scheme: Scheme,
        lambda: f64,
    ) -> Result<(Self, FitReport)> {
        let y = labels(&bags)?;
        let table = EmbeddingTable::compute(&kernel, &bags)?;
        let idx: Vec<usize> = (0..bags.len()).collect();
        let gram = table.gram(&kernel, &idx);
        let (solution, report) = fit_scheme(scheme, &gram, &y, lambda)?;
        Ok((Self::from_solution(solution, kernel, bags)?, report))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.outer.validate()?;
        self.kernel.embedding.validate()?;
        if self.alpha.len() != self.train_bags.len() || self.train_bags.is_empty() {
            return Err(Error::input(format!(
                "model has {} coefficients for {} training bags",
                self.alpha.len(),
                self.train_bags.len()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, test_bags: &[Bag]) -> Result<Vec<f64>> {
        predict(self, test_bags)
    }
}

/// Labels of a training set; every bag must carry one.
pub fn labels(bags: &[Bag]) -> Result<Vec<f64>> {
    bags.iter()
        .map(|b| {
            b.label
                .ok_or_else(|| Error::input(format!("training bag '{}' has no label", b.id)))
        })
        .collect()
}

/// `f(μ_t) = Σ_i α_i K(μ_t, μ_i)` for each test bag.
pub fn predict(model: &CoefficientModel, test_bags: &[Bag]) -> Result<Vec<f64>> {
    model.validate()?;
    if test_bags.is_empty() {
        return Ok(Vec::new());
    }
    let cross = cross_gram_with(&model.kernel, test_bags, &model.train_bags)?;
    let alpha = DVector::from_column_slice(&model.alpha);
    Ok((cross * alpha).iter().copied().collect())
}

/// Root mean squared difference between predictions and noiseless targets.
pub fn rms_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::input("excess error over an empty test set"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::input(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Monte Carlo estimate of `‖f̂ − f_ρ‖` over test bags with known regression values.
pub fn excess_error(model: &CoefficientModel, test: &[(Bag, f64)]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::input("excess error over an empty test set"));
    }
    let bags: Vec<Bag> = test.iter().map(|(b, _)| b.clone()).collect();
    let targets: Vec<f64> = test.iter().map(|(_, t)| *t).collect();
    rms_error(&predict(model, &bags)?, &targets)
}
