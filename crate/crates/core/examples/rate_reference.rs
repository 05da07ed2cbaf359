//! Runs the desk-scale rate experiment and prints the median-error slope.
//!
//! `cargo run --release --example rate_reference -- [replications] [n_max]`

use std::time::Instant;

use distreg::analysis::{LambdaMode, RateExperiment, ScheduleParams};
use distreg::{
    EmbeddingKernelSpec, KernelPair, MetaDistributionSpec, OuterKernelSpec, Scheme, TargetFamily,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let replications: usize = args.next().map_or(50, |a| a.parse().expect("replications"));
    let n_max: usize = args.next().map_or(100, |a| a.parse().expect("n_max"));
    let experiment = RateExperiment {
        meta: MetaDistributionSpec {
            dim: 1,
            scale: 0.1,
            target: TargetFamily::LinearMean,
            noise_sd: 0.05,
            noise_bound: 2.0,
            seed: 20240611,
        },
        kernel: KernelPair::new(
            OuterKernelSpec::GaussianOnEmbedding { sigma: 0.5 },
            EmbeddingKernelSpec::gaussian(0.2, 1).unwrap(),
        )
        .unwrap(),
        scheme: Scheme::CoefficientL2,
        lambda: LambdaMode::default_grid(),
        m_values: vec![25, 50, 100, 200],
        replications,
        n_max,
        n_test: 100,
        schedule: ScheduleParams::default(),
    };
    let start = Instant::now();
    let outcome = experiment.run().unwrap();
    for (m, e) in &outcome.medians {
        println!("m = {m:>4}  median error = {e:.6e}");
    }
    let fit = outcome.fit.unwrap();
    println!(
        "slope = {:.6}  r2 = {:.4}  ({:.1}s)",
        fit.slope,
        fit.r_squared,
        start.elapsed().as_secs_f64()
    );
}
