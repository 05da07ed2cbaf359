use crate::error::{Error, Result};
use crate::gram::SpectrumReport;

use super::rate::least_squares;

/// Singular values at or below this are treated as numerical noise by the decay fit.
pub const DECAY_FLOOR: f64 = 1e-12;

/// `𝒩(λ) = Σ_ℓ σ_ℓ / (σ_ℓ + λ)` over the report's singular values.
pub fn effective_dimension(spec: &SpectrumReport, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(spec.singular_values.iter().map(|&s| s / (s + lambda)).sum())
}

/// Upper bound `α c_α / (α − 1) · λ^{-1/α}` on `𝒩(λ)` when `σ_ℓ ≤ c_α ℓ^{-α}`.
pub fn capacity_bound(alpha: f64, c_alpha: f64, lambda: f64) -> f64 {
    alpha * c_alpha / (alpha - 1.0) * lambda.powf(-1.0 / alpha)
}

/// Decay exponent `α̂` from a least-squares fit of `ln σ_ℓ` against `ln ℓ` over the
/// first `head` singular values (values below [`DECAY_FLOOR`] are skipped).
pub fn fit_decay_exponent(spec: &SpectrumReport, head: usize) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = spec
        .singular_values
        .iter()
        .take(head)
        .enumerate()
        .filter(|(_, &s)| s > DECAY_FLOOR)
        .map(|(l, &s)| (((l + 1) as f64).ln(), s.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::input(format!(
            "decay fit needs at least 3 singular values above {DECAY_FLOOR:e} in the first {head}, found {}",
            xs.len()
        )));
    }
    let (slope, _, _) = least_squares(&xs, &ys);
    Ok(-slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_spectrum(c: f64, alpha: f64, n: usize) -> SpectrumReport {
        SpectrumReport::from_singular_values((1..=n).map(|l| c * (l as f64).powf(-alpha)).collect())
    }

    #[test]
    fn equal_values_closed_form() {
        let spec = SpectrumReport::from_singular_values(vec![0.2; 7]);
        let v = effective_dimension(&spec, 0.05).unwrap();
        assert!((v - 7.0 * 0.2 / 0.25).abs() < 1e-14);
    }

    #[test]
    fn vanishes_for_huge_lambda() {
        let spec = power_spectrum(1.0, 2.0, 100);
        let s1 = spec.singular_values[0];
        assert!(effective_dimension(&spec, 1e9 * s1).unwrap() < 1e-6);
        assert!(matches!(
            effective_dimension(&spec, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn capacity_bound_example() {
        let spec = power_spectrum(1.0, 2.0, 100);
        // exact sum, written out independently of effective_dimension
        let exact: f64 = (1..=100)
            .map(|l| {
                let s = 1.0 / (l * l) as f64;
                s / (s + 0.01)
            })
            .sum();
        let v = effective_dimension(&spec, 0.01).unwrap();
        assert!((v - exact).abs() < 1e-12);
        assert!((capacity_bound(2.0, 1.0, 0.01) - 20.0).abs() < 1e-12);
        assert!(exact <= 20.0);
    }

    #[test]
    fn monotone_and_rank_bounded() {
        let mut values: Vec<f64> = (1..=30).map(|l| (l as f64).powf(-1.5)).collect();
        values.extend([0.0; 5]);
        let spec = SpectrumReport::from_singular_values(values);
        let curve: Vec<f64> = (0..10)
            .map(|i| effective_dimension(&spec, 10f64.powf(-6.0 + 0.7 * i as f64)).unwrap())
            .collect();
        assert!(curve.windows(2).all(|w| w[1] < w[0]));
        assert!(curve.iter().all(|&v| v <= spec.rank(0.0) as f64));
    }

    #[test]
    fn decay_exponent_recovery() {
        let a = fit_decay_exponent(&power_spectrum(1.0, 2.0, 50), 20).unwrap();
        assert!((a - 2.0).abs() < 1e-10);
        let a = fit_decay_exponent(&power_spectrum(3.0, 1.5, 50), 20).unwrap();
        assert!((a - 1.5).abs() < 1e-10);
        let tiny = SpectrumReport::from_singular_values(vec![1.0, 0.5, 1e-13, 0.0]);
        assert!(matches!(fit_decay_exponent(&tiny, 4), Err(Error::Input(_))));
    }
}
