//! Theory-facing computations: spectral diagnostics, the λ/N schedules, learning
//! rate experiments and the coefficient-vs-KRR saturation comparison.

mod experiment;
mod rate;
mod saturation;
mod schedule;
mod spectral;

pub use experiment::{
    held_out_split, log_grid, select_lambda, LambdaMode, RateExperiment, RateOutcome, RateRow,
    DEFAULT_HOLDOUT, DEFAULT_N_MAX,
};
pub use rate::{least_squares, rate_fit, RateFit};
pub use saturation::{
    compare_schemes, saturation_compare, SaturationConfig, SaturationReport, Winner, TIE_FLOOR,
};
pub use schedule::{schedule, Schedule, ScheduleParams};
pub use spectral::{capacity_bound, effective_dimension, fit_decay_exponent, DECAY_FLOOR};
