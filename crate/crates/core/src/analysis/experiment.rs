//! Learning-rate sweeps: generate → fit → excess error over `(m, replication)`.
//!
//! Each `(m, rep)` task is independent and seeded from `(seed, m, rep)`, so tasks
//! run in parallel and the result table is sorted by `(m, rep)` afterwards.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::EmbeddingTable;
use crate::outer_kernel::KernelPair;
use crate::solver::{fit_scheme, rms_error, Scheme};
use crate::synth::{generate, MetaDistributionSpec};

use super::rate::{rate_fit, RateFit};
use super::schedule::{schedule, ScheduleParams};

pub const DEFAULT_HOLDOUT: f64 = 0.3;
pub const DEFAULT_N_MAX: usize = 2000;

/// `count` points spaced evenly in log scale over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// How λ is chosen per fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed {
        value: f64,
    },
    /// Held-out selection: fit on the leading `1 − holdout` share, score on the rest,
    /// refit on everything with the winner.
    Grid {
        values: Vec<f64>,
        holdout: f64,
    },
    /// `λ = κ⁴ m^{-β}` from the experiment's schedule parameters.
    Schedule,
}

impl LambdaMode {
    pub fn default_grid() -> Self {
        LambdaMode::Grid {
            values: log_grid(1e-9, 1.0, 10),
            holdout: DEFAULT_HOLDOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self {
            LambdaMode::Fixed { value } if !positive(*value) => Err(Error::config(format!(
                "lambda must be positive, got {value}"
            ))),
            LambdaMode::Grid { values, holdout } => {
                if values.is_empty() || !values.iter().all(|&v| positive(v)) {
                    return Err(Error::config(
                        "lambda grid must be a nonempty list of positive values",
                    ));
                }
                if !(*holdout > 0.0 && *holdout < 1.0) {
                    return Err(Error::config(format!(
                        "holdout fraction must lie in (0, 1), got {holdout}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Positions `(fit, validation)` of a leading/trailing split of `m` items.
pub fn held_out_split(m: usize, holdout: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 2 {
        return Err(Error::input(format!(
            "held-out selection needs at least 2 bags, got {m}"
        )));
    }
    let n_val = ((m as f64 * holdout).round() as usize).clamp(1, m - 1);
    let cut = m - n_val;
    Ok(((0..cut).collect(), (cut..m).collect()))
}

/// Picks the grid value with the smallest validation mean squared error against the
/// observed labels. `idx` are table positions of the training bags and `y` their labels.
pub fn select_lambda(
    table: &EmbeddingTable,
    kernel: &KernelPair,
    scheme: Scheme,
    idx: &[usize],
    y: &[f64],
    grid: &[f64],
    holdout: f64,
) -> Result<f64> {
    let (fit_pos, val_pos) = held_out_split(idx.len(), holdout)?;
    let fit_idx: Vec<usize> = fit_pos.iter().map(|&p| idx[p]).collect();
    let val_idx: Vec<usize> = val_pos.iter().map(|&p| idx[p]).collect();
    let fit_y: Vec<f64> = fit_pos.iter().map(|&p| y[p]).collect();
    let val_y: Vec<f64> = val_pos.iter().map(|&p| y[p]).collect();
    let gram = table.gram(kernel, &fit_idx);
    let cross = table.block(&kernel.outer, &val_idx, &fit_idx);
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let sol = match fit_scheme(scheme, &gram, &fit_y, lambda) {
            Ok((sol, _)) => sol,
            Err(Error::Numerical(msg)) => {
                log::warn!("skipping lambda {lambda:e}: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let pred = &cross * &sol.alpha;
        let err = rms_error(pred.as_slice(), &val_y)?;
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((lambda, err));
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::Numerical("every lambda in the grid failed to fit".into()))
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub rep: usize,
    pub scheme: Scheme,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateOutcome {
    pub rows: Vec<RateRow>,
    /// `(m, median error over replications)`, ascending in `m`.
    pub medians: Vec<(f64, f64)>,
    /// Fit through the medians; absent with fewer than three `m` values.
    pub fit: Option<RateFit>,
    /// Whether `n_max` truncated the scheduled second-stage size for some `m`.
    pub cap_binds: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperiment {
    pub meta: MetaDistributionSpec,
    pub kernel: KernelPair,
    pub scheme: Scheme,
    pub lambda: LambdaMode,
    pub m_values: Vec<usize>,
    pub replications: usize,
    /// Cap on the scheduled second-stage size.
    pub n_max: usize,
    /// Number of fresh test bags for the excess-error estimate.
    pub n_test: usize,
    /// Drives `N` (and λ in schedule mode).
    pub schedule: ScheduleParams,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn task_seed(seed: u64, m: usize, rep: usize, role: u64) -> u64 {
    splitmix(splitmix(splitmix(seed ^ role) ^ m as u64) ^ rep as u64)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl RateExperiment {
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        self.kernel.outer.validate()?;
        self.kernel.embedding.validate()?;
        self.lambda.validate()?;
        self.schedule.validate()?;
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.m_values.is_empty() {
            return Err(Error::config("m list is empty"));
        }
        if let Some(m) = self.m_values.iter().find(|&&m| m < 3) {
            return Err(Error::config(format!(
                "every m must be at least 3, got {m}"
            )));
        }
        if self.n_max == 0 || self.n_test == 0 {
            return Err(Error::config("n_max and n_test must be at least 1"));
        }
        if self.kernel.embedding.dim != self.meta.dim {
            return Err(Error::config(format!(
                "embedding kernel dimension {} differs from synthetic dimension {}",
                self.kernel.embedding.dim, self.meta.dim
            )));
        }
        if self.scheme == Scheme::Krr
            && !(self.kernel.outer.psd_claimed() && self.kernel.outer.symmetric())
        {
            return Err(Error::contract(format!(
                "{}; outer kernel '{}' is indefinite or asymmetric",
                crate::solver::KRR_CONTRACT,
                self.kernel.outer.name()
            )));
        }
        Ok(())
    }

    /// `min(n_max, ⌈m^ζ ln m⌉)` and whether the cap bound.
    pub fn second_stage_size(&self, m: usize) -> Result<(usize, bool)> {
        let scheduled = schedule(&self.schedule, m)?.n;
        let capped = scheduled > self.n_max as u64;
        Ok((
            if capped {
                self.n_max
            } else {
                scheduled as usize
            },
            capped,
        ))
    }

    fn run_task(&self, m: usize, rep: usize) -> Result<RateRow> {
        let (n, _) = self.second_stage_size(m)?;
        let train_meta = MetaDistributionSpec {
            seed: task_seed(self.meta.seed, m, rep, 0),
            ..self.meta.clone()
        };
        let test_meta = MetaDistributionSpec {
            seed: task_seed(self.meta.seed, m, rep, 1),
            ..self.meta.clone()
        };
        let train = generate(&train_meta, m, n)?;
        let test = generate(&test_meta, self.n_test, n)?;

        let mut bags = train.bags;
        bags.extend(test.bags);
        let table = EmbeddingTable::compute(&self.kernel, &bags)?;
        let train_idx: Vec<usize> = (0..m).collect();
        let test_idx: Vec<usize> = (m..m + self.n_test).collect();
        let y: Vec<f64> = bags[..m]
            .iter()
            .map(|b| b.label.unwrap_or(f64::NAN))
            .collect();

        let lambda = match &self.lambda {
            LambdaMode::Fixed { value } => *value,
            LambdaMode::Schedule => schedule(&self.schedule, m)?.lambda,
            LambdaMode::Grid { values, holdout } => select_lambda(
                &table,
                &self.kernel,
                self.scheme,
                &train_idx,
                &y,
                values,
                *holdout,
            )?,
        };
        let gram = table.gram(&self.kernel, &train_idx);
        let (sol, _) = fit_scheme(self.scheme, &gram, &y, lambda)?;
        let cross = table.block(&self.kernel.outer, &test_idx, &train_idx);
        let pred = cross * &sol.alpha;
        let error = rms_error(pred.as_slice(), &test.targets)?;
        Ok(RateRow {
            m,
            n,
            lambda,
            rep,
            scheme: self.scheme,
            error,
        })
    }

    pub fn run(&self) -> Result<RateOutcome> {
        self.validate()?;
        let mut m_values = self.m_values.clone();
        m_values.sort_unstable();
        m_values.dedup();

        let mut warnings = Vec::new();
        let mut cap_binds = false;
        for &m in &m_values {
            let (n, capped) = self.second_stage_size(m)?;
            if capped {
                cap_binds = true;
                warnings.push(format!("m = {m}: scheduled N exceeds n_max, using N = {n}"));
            }
        }

        let tasks: Vec<(usize, usize)> = m_values
            .iter()
            .flat_map(|&m| (0..self.replications).map(move |rep| (m, rep)))
            .collect();
        let mut rows = tasks
            .par_iter()
            .map(|&(m, rep)| self.run_task(m, rep))
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by_key(|r| (r.m, r.rep));

        let medians: Vec<(f64, f64)> = m_values
            .iter()
            .map(|&m| {
                let mut errs: Vec<f64> =
                    rows.iter().filter(|r| r.m == m).map(|r| r.error).collect();
                (m as f64, median(&mut errs))
            })
            .collect();
        let fit = if medians.len() >= 3 {
            Some(rate_fit(&medians)?)
        } else {
            warnings.push(format!(
                "only {} distinct m values; rate fit skipped",
                medians.len()
            ));
            None
        };
        Ok(RateOutcome {
            rows,
            medians,
            fit,
            cap_binds,
            warnings,
        })
    }
}
