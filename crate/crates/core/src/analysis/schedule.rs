use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the theory schedule `λ = κ⁴ m^{-β}`, `N = ⌈m^ζ ln m⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// Regularity index of the target.
    pub r: f64,
    /// Polynomial decay exponent of the kernel's singular values.
    #[serde(alias = "alpha")]
    pub alpha_decay: f64,
    /// Hölder exponent.
    pub h: f64,
    /// Stand-in for the unknown `κ⁴`; a tuning constant.
    #[serde(default = "unit")]
    pub kappa4_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            r: 1.0,
            alpha_decay: 2.0,
            h: 1.0,
            kappa4_scale: 1.0,
        }
    }
}

impl ScheduleParams {
    pub fn new(r: f64, alpha_decay: f64, h: f64) -> Self {
        ScheduleParams {
            r,
            alpha_decay,
            h,
            kappa4_scale: 1.0,
        }
    }

    /// Rejects `r ≤ 0`, `α < 1`, `h ∉ (0, 1]` and a non-positive κ⁴ scale.
    ///
    /// `α = 1` is accepted so the schedule can be evaluated at the boundary of the
    /// decay condition; the capacity bound itself still needs `α > 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::config(format!(
                "regularity r must be positive, got {}",
                self.r
            )));
        }
        if !(self.alpha_decay >= 1.0 && self.alpha_decay.is_finite()) {
            return Err(Error::config(format!(
                "decay exponent alpha must be at least 1, got {}",
                self.alpha_decay
            )));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::config(format!(
                "Hölder exponent h must lie in (0, 1], got {}",
                self.h
            )));
        }
        if !(self.kappa4_scale > 0.0 && self.kappa4_scale.is_finite()) {
            return Err(Error::config(format!(
                "kappa4_scale must be positive, got {}",
                self.kappa4_scale
            )));
        }
        Ok(())
    }

    /// `β`: `2α/(2αr+1)` for `r ≤ 2`, `2α/(4α+1)` beyond.
    pub fn beta(&self) -> f64 {
        let a = self.alpha_decay;
        if self.r <= 2.0 {
            2.0 * a / (2.0 * a * self.r + 1.0)
        } else {
            2.0 * a / (4.0 * a + 1.0)
        }
    }

    /// `ζ`: `(3α+2αr)/(h(2αr+1))` for `r ≤ 2`, `7α/(h(4α+1))` beyond.
    pub fn zeta(&self) -> f64 {
        let a = self.alpha_decay;
        if self.r <= 2.0 {
            (3.0 * a + 2.0 * a * self.r) / (self.h * (2.0 * a * self.r + 1.0))
        } else {
            7.0 * a / (self.h * (4.0 * a + 1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub beta: f64,
    pub zeta: f64,
    pub lambda: f64,
    /// Second-stage size `⌈m^ζ ln m⌉` (saturates at `u64::MAX`).
    pub n: u64,
}

/// Regularization and second-stage size for `m` bags. Regularity below 1/2 uses the
/// `1/2 ≤ r ≤ 2` formulas.
pub fn schedule(p: &ScheduleParams, m: usize) -> Result<Schedule> {
    p.validate()?;
    if m < 3 {
        return Err(Error::config(format!("schedule needs m >= 3, got {m}")));
    }
    let (beta, zeta) = (p.beta(), p.zeta());
    let mf = m as f64;
    let lambda = p.kappa4_scale * mf.powf(-beta);
    let n = (mf.powf(zeta) * mf.ln()).ceil() as u64;
    Ok(Schedule {
        beta,
        zeta,
        lambda,
        n,
    })
}
