//! Command-line front end for the sequential-testing library: builds staged
//! tests from a JSON experiment config and runs the solver, simulation,
//! calibration, and tabulation tools on them.
//!
//! Exit codes: `0` success, `2` rejected input or malformed config, `3`
//! solver/build/io failure on well-formed input, `4` calibration assertion
//! failure (`calibrate --assert` with a risk budget violation).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use seqtest::convexgeom::solve_pairwise;
use seqtest::harness::{
    calibrate_risk_full, profile_csv, profile_grid, report_json, report_json_with,
    run_experiment_with, simulate_trial, trials_csv, volumes_csv, volumes_report, BuildMetadata,
    ExperimentConfig, VolumesRequest,
};
use seqtest::pairwise::{build_detector, verify_detector_risk};
use seqtest::sequential::{build_sequential, persist, CutPolicy, SequentialTest, CELL_SOLVE_TOL};
use seqtest::{Error, Result};

/// Exit status for rejected inputs and malformed configs.
const EXIT_CONFIG: u8 = 2;
/// Exit status for solver, build, or io failures on well-formed inputs.
const EXIT_FAILURE: u8 = 3;
/// Exit status for `calibrate --assert` when the risk budget is exceeded.
const EXIT_CALIBRATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "seqtest",
    version,
    about = "Build and exercise near-optimal sequential tests for convex composite hypotheses"
)]
struct Cli {
    /// Experiment config (JSON document, schema version "v1").
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config's random seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory for artifacts; created if missing. Without it the
    /// primary artifact goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Restricts artifacts to one format (default: write both).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solves the optimal-detector problem for the config's first two bodies.
    SolvePair {
        /// Certified-gap tolerance for the saddle-point solver.
        #[arg(long, default_value_t = CELL_SOLVE_TOL)]
        tol: f64,
    },
    /// Builds the staged test, reports its schedule, and saves it with --out.
    Build,
    /// Builds the test and runs the config's Monte Carlo trials.
    Run,
    /// Runs one traced trial and prints its stage-by-stage acceptance sets.
    Simulate {
        /// Parameter to observe from, as comma-separated coordinates
        /// (default: drawn by the config's sampling rule).
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
    },
    /// Tabulates the volume discarded by one stage's cuts in the two-box
    /// template, per dimension and cut policy.
    Volumes {
        /// Schedule stage whose margin is tabulated (1-based).
        #[arg(long, default_value_t = 11)]
        stage: usize,
        /// Template dimensions to instantiate.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4, 5, 6])]
        dims: Vec<usize>,
        /// Monte Carlo budget per measured row.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        /// Also tabulate the adaptive cut policy (Monte Carlo, slower).
        #[arg(long)]
        smart: bool,
    },
    /// Evaluates the log observation cost on a 2-d grid over the hypotheses.
    Profile {
        /// Grid points per axis.
        #[arg(long, default_value_t = 41)]
        resolution: usize,
    },
    /// Estimates the bad-event rate over seeded trials and compares its
    /// confidence interval against the risk budget.
    Calibrate {
        /// Exit with status 4 if the interval lies above the budget.
        #[arg(long)]
        assert: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}

/// Maps error classes to exit codes: bad inputs give 2, failures on
/// well-formed inputs give 3.
fn exit_class(err: &Error) -> u8 {
    match err {
        Error::ConfigError(_)
        | Error::InvalidParameter { .. }
        | Error::InputError(_)
        | Error::InvalidBody(_)
        | Error::Json(_) => EXIT_CONFIG,
        Error::SolverFailure { .. }
        | Error::AssumptionViolated(_)
        | Error::CutInfeasible(_)
        | Error::Infeasible(_)
        | Error::Unsupported(_)
        | Error::Io(_) => EXIT_FAILURE,
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::ConfigError("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::ConfigError(format!("cannot configure {n} threads: {e}")))?;
    }
    let ctx = Ctx {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::SolvePair { tol } => cmd_solve_pair(&ctx, tol),
        Command::Build => cmd_build(&ctx),
        Command::Run => cmd_run(&ctx),
        Command::Simulate { mu } => cmd_simulate(&ctx, mu),
        Command::Volumes {
            stage,
            dims,
            samples,
            smart,
        } => cmd_volumes(&ctx, stage, dims, samples, smart),
        Command::Profile { resolution } => cmd_profile(&ctx, resolution),
        Command::Calibrate { assert } => cmd_calibrate(&ctx, assert),
    }
}

/// Global options shared by every subcommand.
struct Ctx {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

impl Ctx {
    fn config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::ConfigError("this command needs --config <PATH>".into()))?;
        let text = fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn want(&self, format: Format) -> bool {
        self.format.is_none() || self.format == Some(format)
    }

    /// Writes one artifact into the output directory, honoring the format
    /// filter. Returns whether a file was written.
    fn emit(&self, name: &str, format: Format, contents: &str) -> Result<bool> {
        if !self.want(format) {
            return Ok(false);
        }
        let Some(dir) = &self.out else {
            return Ok(false);
        };
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, contents)?;
        eprintln!("wrote {}", path.display());
        Ok(true)
    }
}

fn pretty(value: serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn build_test(cfg: &ExperimentConfig) -> Result<SequentialTest> {
    cfg.validate()?;
    build_sequential(cfg.family()?, &cfg.schedule_config())
}

fn cmd_solve_pair(ctx: &Ctx, tol: f64) -> Result<u8> {
    let cfg = ctx.config()?;
    let family = cfg.family()?;
    if family.num_bodies() < 2 {
        return Err(Error::ConfigError(
            "solve-pair needs a config with at least two bodies".into(),
        ));
    }
    let scheme = family.scheme();
    let (x, y) = (&family.bodies()[0], &family.bodies()[1]);
    let saddle = solve_pairwise(scheme, x, y, tol)?;
    let detector = build_detector(&saddle, scheme)?;
    let (risk_x, risk_y) = verify_detector_risk(&detector, x, y)?;
    let text = pretty(serde_json::json!({
        "opt": saddle.opt,
        "risk": saddle.opt.exp(),
        "certified_gap": saddle.certified_gap,
        "mu_star": saddle.mu_star,
        "nu_star": saddle.nu_star,
        "detector_risk_sides": [risk_x, risk_y],
    }))?;
    ctx.emit("solve_pair.json", Format::Json, &text)?;
    print!("{text}");
    Ok(0)
}

fn cmd_build(ctx: &Ctx) -> Result<u8> {
    let cfg = ctx.config()?;
    let test = build_test(&cfg)?;
    let meta = BuildMetadata::from_test(&test);
    let text = pretty(serde_json::json!({
        "config": serde_json::to_value(&cfg)?,
        "build": serde_json::to_value(&meta)?,
    }))?;
    ctx.emit("build.json", Format::Json, &text)?;
    ctx.emit("test.json", Format::Json, &persist::to_json(&test)?)?;
    print!("{text}");
    Ok(0)
}

fn cmd_run(ctx: &Ctx) -> Result<u8> {
    let cfg = ctx.config()?;
    let test = build_test(&cfg)?;
    let report = run_experiment_with(&cfg, &test)?;
    ctx.emit("report.json", Format::Json, &report_json(&report)?)?;
    ctx.emit(
        "trials.csv",
        Format::Csv,
        &trials_csv(report.config.seed, &report.records),
    )?;
    print!("{}", pretty(serde_json::to_value(&report.aggregates)?)?);
    Ok(0)
}

fn cmd_simulate(ctx: &Ctx, mu: Option<Vec<f64>>) -> Result<u8> {
    let cfg = ctx.config()?;
    let test = build_test(&cfg)?;
    let (record, trace) = simulate_trial(&cfg, &test, mu)?;
    let stages: Vec<serde_json::Value> = trace
        .iter()
        .map(|t| {
            serde_json::json!({
                "stage": t.stage,
                "schedule_index": t.schedule_index,
                "observations": t.k,
                "accepted_cells": t.accepted_cells,
            })
        })
        .collect();
    let text = pretty(serde_json::json!({
        "record": serde_json::to_value(&record)?,
        "trace": stages,
    }))?;
    ctx.emit("simulate.json", Format::Json, &text)?;

    println!("mu = {:?} (true color {})", record.mu, record.color_true);
    for t in &trace {
        println!(
            "stage {:>3} (schedule {:>3}): {:>8} observations, accepted cells {:?}",
            t.stage, t.schedule_index, t.k, t.accepted_cells
        );
    }
    match record.color_accepted {
        Some(color) => println!(
            "accepted color {color} at stage {} after {} observations \
             (earliest accepting stage {}) -> {}",
            record.stage,
            record.observations,
            record.s_star,
            if record.correct { "correct" } else { "WRONG" },
        ),
        None => println!(
            "no verdict after {} observations ({} stages)",
            record.observations, record.stage
        ),
    }
    Ok(0)
}

fn cmd_volumes(ctx: &Ctx, stage: usize, dims: Vec<usize>, samples: usize, smart: bool) -> Result<u8> {
    let cfg = ctx.config()?;
    let mut policies = vec![CutPolicy::Default];
    if smart {
        policies.push(CutPolicy::Smart);
    }
    let req = VolumesRequest {
        stage,
        dims,
        policies,
        samples,
    };
    let rows = volumes_report(&cfg, &req)?;
    let csv = volumes_csv(&rows);
    let json = pretty(serde_json::to_value(&rows)?)?;
    let wrote = ctx.emit("volumes.csv", Format::Csv, &csv)? | ctx.emit("volumes.json", Format::Json, &json)?;
    if !wrote {
        if ctx.want(Format::Csv) {
            print!("{csv}");
        } else {
            print!("{json}");
        }
    }
    Ok(0)
}

fn cmd_profile(ctx: &Ctx, resolution: usize) -> Result<u8> {
    let cfg = ctx.config()?;
    let rows = profile_grid(&cfg, resolution)?;
    let csv = profile_csv(&rows);
    let json = pretty(serde_json::to_value(&rows)?)?;
    let wrote = ctx.emit("profile.csv", Format::Csv, &csv)? | ctx.emit("profile.json", Format::Json, &json)?;
    if !wrote {
        if ctx.want(Format::Csv) {
            print!("{csv}");
        } else {
            print!("{json}");
        }
    }
    Ok(0)
}

fn cmd_calibrate(ctx: &Ctx, assert: bool) -> Result<u8> {
    let cfg = ctx.config()?;
    let (calibration, report) = calibrate_risk_full(&cfg)?;
    ctx.emit(
        "report.json",
        Format::Json,
        &report_json_with(&report, Some(&calibration))?,
    )?;
    ctx.emit(
        "trials.csv",
        Format::Csv,
        &trials_csv(report.config.seed, &report.records),
    )?;
    print!("{}", pretty(serde_json::to_value(&calibration)?)?);
    if calibration.violation {
        eprintln!(
            "bad-event rate {:.6} (95% interval [{:.6}, {:.6}]) exceeds the budget {}",
            calibration.bad_rate, calibration.ci_low, calibration.ci_high, calibration.eps
        );
        if assert {
            return Ok(EXIT_CALIBRATION);
        }
    }
    Ok(0)
}
