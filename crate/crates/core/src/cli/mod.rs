//! Command-line front end.
//!
//! Exit codes: 0 success, 2 I/O or malformed data, 3 configuration or contract
//! violation, 4 numerical failure.

pub mod config;
pub mod io;
pub mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{
    effective_dimension, fit_decay_exponent, log_grid, schedule, select_lambda, LambdaMode,
    RateExperiment, ScheduleParams,
};
use crate::embedding::Bag;
use crate::error::{Error, Result};
use crate::gram::{spectrum, EmbeddingTable};
use crate::solver::{fit_scheme, labels, CoefficientModel};
use crate::synth::generate;

use config::ExperimentConfig;

pub const THREADS_ENV: &str = "DISTREG_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "distreg",
    version,
    about = "Distribution regression with coefficient-based regularization"
)]
pub struct Cli {
    /// Worker threads (default: DISTREG_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write the model document.
    Fit(FitArgs),
    /// Predict labels for a bag file with a fitted model.
    Predict(PredictArgs),
    /// Learning-rate sweep over m and replications.
    Sweep(SweepArgs),
    /// Spectrum, decay exponent and effective dimension of a Gram matrix.
    Spectrum(SpectrumArgs),
    /// Theory schedule for λ and the second-stage size N.
    Schedule(ScheduleArgs),
    /// Write a synthetic bag file.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model file to write (default: <config out>/model.json or ./model.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bags: PathBuf,
    /// Optional config whose kernel sections must match the model's kernels.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predictions CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_svg: bool,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub kappa4_scale: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Bag file to write (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("{THREADS_ENV}={v} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::config("thread count must be at least 1"));
        }
        // a second initialization (e.g. from tests) keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Fit(a) => cmd_fit(&a, &mut out),
        Command::Predict(a) => cmd_predict(&a, &mut out),
        Command::Sweep(a) => cmd_sweep(&a, &mut out),
        Command::Spectrum(a) => cmd_spectrum(&a, &mut out),
        Command::Schedule(a) => cmd_schedule(&a, &mut out),
        Command::Generate(a) => cmd_generate(&a, &mut out),
    }
}

fn load_data(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Vec<Bag>> {
    if let Some(path) = &cfg.data.path {
        return io::read_bags(path);
    }
    let meta = cfg.meta(seed)?;
    let synth = cfg.data.synth.as_ref().expect("validated data section");
    let (m, n) = synth
        .m
        .zip(synth.n)
        .ok_or_else(|| Error::config("[data.synth] needs m and n for this command"))?;
    Ok(generate(&meta, m, n)?.bags)
}

fn out_dir(flag: Option<&PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = flag
        .cloned()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn emit_json(out: &mut impl Write, value: &serde_json::Value) -> Result<()> {
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(value).expect("json values serialize")
    )?;
    Ok(())
}

fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(value).expect("json values serialize") + "\n",
    )?;
    Ok(())
}

pub fn cmd_fit(args: &FitArgs, out: &mut impl Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.common.config)?;
    let bags = load_data(&cfg, args.common.seed)?;
    let first = bags
        .first()
        .ok_or_else(|| Error::input("training data contains no bags"))?;
    let kernel = cfg.kernel(first.dim(), &bags)?;
    let y = labels(&bags)?;
    let m = bags.len();

    let table = EmbeddingTable::compute(&kernel, &bags)?;
    let idx: Vec<usize> = (0..m).collect();
    let lambda = match cfg.lambda.resolve()? {
        LambdaMode::Fixed { value } => value,
        LambdaMode::Schedule => schedule(&cfg.schedule, m)?.lambda,
        LambdaMode::Grid { values, holdout } => {
            select_lambda(&table, &kernel, cfg.scheme, &idx, &y, &values, holdout)?
        }
    };
    let gram = table.gram(&kernel, &idx);
    let (solution, report) = fit_scheme(cfg.scheme, &gram, &y, lambda)?;
    let model = CoefficientModel::from_solution(solution, kernel, bags)?;

    let path = match &args.out {
        Some(p) => p.clone(),
        None => out_dir(None, &cfg)?.join("model.json"),
    };
    io::write_model(&path, &model)?;
    if args.common.json {
        emit_json(
            out,
            &json!({
                "model": path,
                "scheme": model.scheme,
                "lambda": lambda,
                "m": m,
                "kernel_fingerprint": model.kernel.fingerprint(),
                "fit_report": report,
            }),
        )?;
    } else {
        writeln!(out, "model: {}", path.display())?;
        writeln!(
            out,
            "scheme: {}  lambda: {lambda:e}  m: {m}",
            model.scheme.name()
        )?;
        writeln!(out, "objective: {:.6e}", report.objective_value)?;
        writeln!(out, "relative residual: {:.3e}", report.residual_norm)?;
        writeln!(out, "condition estimate: {:.3e}", report.condition_estimate)?;
        writeln!(out, "wall time: {:.3}s", report.wall_time)?;
    }
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs, out: &mut impl Write) -> Result<()> {
    let model = io::read_model(&args.model)?;
    let bags = io::read_bags(&args.bags)?;
    if let Some(cfg_path) = &args.config {
        let cfg = ExperimentConfig::load(cfg_path)?;
        let dim = model.kernel.embedding.dim;
        let requested = cfg.kernel(dim, &model.train_bags)?;
        if requested.fingerprint() != model.kernel.fingerprint() {
            return Err(Error::contract(format!(
                "kernel fingerprint mismatch: model {} vs requested {}",
                model.kernel.fingerprint(),
                requested.fingerprint()
            )));
        }
    }
    let predictions = model.predict(&bags)?;
    let rows = bags
        .iter()
        .zip(&predictions)
        .map(|(b, p)| vec![b.id.clone(), p.to_string()]);
    match &args.out {
        Some(path) => io::write_csv_file(path, &["id", "prediction"], rows),
        None => io::write_csv(out, &["id", "prediction"], rows),
    }
}

pub fn sweep_experiment(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<RateExperiment> {
    let meta = cfg.meta(seed)?;
    let reference_pool = if cfg.needs_reference_bag() {
        load_data(cfg, seed)?
    } else {
        Vec::new()
    };
    let kernel = cfg.kernel(meta.dim, &reference_pool)?;
    Ok(RateExperiment {
        meta,
        kernel,
        scheme: cfg.scheme,
        lambda: cfg.lambda.resolve()?,
        m_values: cfg.m_values.clone(),
        replications: cfg.replications,
        n_max: cfg.n_max,
        n_test: cfg.n_test,
        schedule: cfg.schedule,
    })
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut impl Write) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(&args.common.config)?;
    let experiment = sweep_experiment(&cfg, args.common.seed)?;
    experiment.validate()?;
    let dir = out_dir(args.out.as_ref(), &cfg)?;
    let outcome = experiment.run()?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }

    let rows = outcome.rows.iter().map(|r| {
        vec![
            r.m.to_string(),
            r.n.to_string(),
            r.lambda.to_string(),
            r.rep.to_string(),
            r.scheme.name().to_string(),
            r.error.to_string(),
        ]
    });
    io::write_csv_file(
        &dir.join("rates.csv"),
        &["m", "N", "lambda", "rep", "scheme", "error"],
        rows,
    )?;

    if !args.no_svg && outcome.medians.len() >= 2 {
        let plot = svg::log_log_plot(
            &outcome.medians,
            "median excess error",
            "m (bags)",
            "excess error",
        );
        std::fs::write(dir.join("rates.svg"), plot)?;
    }
    let summary = json!({
        "scheme": experiment.scheme,
        "m_values": outcome.medians.iter().map(|p| p.0).collect::<Vec<_>>(),
        "median_errors": outcome.medians.iter().map(|p| p.1).collect::<Vec<_>>(),
        "rate_fit": outcome.fit,
        "n_max": experiment.n_max,
        "n_cap_binds": outcome.cap_binds,
        "warnings": outcome.warnings,
        "wall_time": started.elapsed().as_secs_f64(),
    });
    write_json_file(&dir.join("rate_summary.json"), &summary)?;

    if args.common.json {
        emit_json(out, &summary)?;
    } else {
        for (m, e) in &outcome.medians {
            writeln!(out, "m = {m:>6}  median error = {e:.6e}")?;
        }
        match &outcome.fit {
            Some(f) => writeln!(
                out,
                "slope = {:.4}  intercept = {:.4}  R² = {:.4}",
                f.slope, f.intercept, f.r_squared
            )?,
            None => writeln!(out, "rate fit skipped (fewer than 3 m values)")?,
        }
        if outcome.cap_binds {
            writeln!(out, "note: N capped at n_max = {}", experiment.n_max)?;
        }
        writeln!(out, "tables written to {}", dir.display())?;
    }
    Ok(())
}

pub fn cmd_spectrum(args: &SpectrumArgs, out: &mut impl Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.common.config)?;
    let bags = load_data(&cfg, args.common.seed)?;
    if bags.len() < 3 {
        return Err(Error::contract(format!(
            "spectrum needs at least 3 bags, got {}",
            bags.len()
        )));
    }
    let kernel = cfg.kernel(bags[0].dim(), &bags)?;
    let table = EmbeddingTable::compute(&kernel, &bags)?;
    let idx: Vec<usize> = (0..bags.len()).collect();
    let report = spectrum(&table.gram(&kernel, &idx))?;
    let head = cfg.head.min(report.singular_values.len());
    let alpha_hat = match fit_decay_exponent(&report, head) {
        Ok(a) => Some(a),
        Err(e) => {
            log::warn!("decay exponent not fitted: {e}");
            None
        }
    };
    let grid = log_grid(1e-6, 1.0, 20);
    let curve = grid
        .iter()
        .map(|&l| effective_dimension(&report, l).map(|v| (l, v)))
        .collect::<Result<Vec<_>>>()?;

    let dir = out_dir(args.out.as_ref(), &cfg)?;
    io::write_csv_file(
        &dir.join("spectrum.csv"),
        &["l", "sigma"],
        report
            .singular_values
            .iter()
            .enumerate()
            .map(|(l, s)| vec![(l + 1).to_string(), s.to_string()]),
    )?;
    io::write_csv_file(
        &dir.join("effective_dimension.csv"),
        &["lambda", "n_eff"],
        curve
            .iter()
            .map(|(l, v)| vec![l.to_string(), v.to_string()]),
    )?;
    let summary = json!({
        "m": report.m,
        "alpha_hat": alpha_hat,
        "head": head,
        "rank": report.rank(crate::analysis::DECAY_FLOOR),
        "sigma_1": report.singular_values[0],
        "symmetric": report.eigenvalues.is_some(),
        "scale_note": report.scale_note,
    });
    write_json_file(&dir.join("spectrum_summary.json"), &summary)?;
    if args.common.json {
        emit_json(out, &summary)?;
    } else {
        writeln!(
            out,
            "m: {}  sigma_1: {:.6e}",
            report.m, report.singular_values[0]
        )?;
        match alpha_hat {
            Some(a) => writeln!(out, "alpha_hat (head {head}): {a:.4}")?,
            None => writeln!(out, "alpha_hat: not available")?,
        }
        writeln!(out, "tables written to {}", dir.display())?;
    }
    Ok(())
}

pub fn cmd_schedule(args: &ScheduleArgs, out: &mut impl Write) -> Result<()> {
    let params = ScheduleParams {
        r: args.r,
        alpha_decay: args.alpha,
        h: args.h,
        kappa4_scale: args.kappa4_scale,
    };
    let s = schedule(&params, args.m)?;
    if args.json {
        emit_json(
            out,
            &json!({"beta": s.beta, "zeta": s.zeta, "lambda": s.lambda, "N": s.n, "m": args.m}),
        )
    } else {
        writeln!(
            out,
            "beta = {}\nzeta = {}\nlambda = {}\nN = {}",
            s.beta, s.zeta, s.lambda, s.n
        )?;
        Ok(())
    }
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut impl Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.common.config)?;
    let meta = cfg.meta(args.common.seed)?;
    let synth = cfg.data.synth.as_ref().expect("meta() checked synth");
    let m = args
        .m
        .or(synth.m)
        .ok_or_else(|| Error::config("bag count m missing (--m or [data.synth] m)"))?;
    let n = args
        .n
        .or(synth.n)
        .ok_or_else(|| Error::config("points per bag n missing (--n or [data.synth] n)"))?;
    let data = generate(&meta, m, n)?;
    match &args.out {
        Some(path) => {
            io::write_bags(path, &data.bags)?;
            if args.common.json {
                emit_json(
                    out,
                    &json!({"path": path, "m": m, "n": n, "seed": meta.seed}),
                )?;
            }
            Ok(())
        }
        None => io::write_bags_to(out, &data.bags),
    }
}
