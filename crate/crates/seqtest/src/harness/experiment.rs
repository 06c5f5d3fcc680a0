//! Seeded Monte Carlo trials over a built sequential test.

use super::config::{ExperimentConfig, MuSampling};
use crate::analysis;
use crate::convexgeom::{region_volume, sample_uniform};
use crate::error::{Error, Result};
use crate::sequential::{build_sequential, run_sequential_streaming, SequentialTest, StageRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sample budget for the per-body volume weights behind uniform sampling.
const WEIGHT_SAMPLES: usize = 100_000;
/// Rejection-sampling proposal cap per drawn point.
const SAMPLE_TRIES: usize = 1_000_000;
/// Upper bound on the number of grid points a `Grid` sampling may enumerate.
const MAX_GRID_POINTS: u64 = 1_000_000;
/// Membership tolerance when assigning a parameter to a body.
const MEMBERSHIP_TOL: f64 = 1e-9;

/// Outcome of a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub mu: Vec<f64>,
    /// Color of the body the parameter was drawn from.
    pub color_true: usize,
    /// Accepted color, if the test reached a verdict.
    pub color_accepted: Option<usize>,
    /// Execution stage at which the test stopped.
    pub stage: usize,
    /// Observations actually consumed.
    pub observations: u64,
    pub correct: bool,
    /// First stage whose accepting region contains the parameter.
    pub s_star: usize,
}

/// Order-independent summary statistics over the trial records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: u64,
    /// Wrong-color acceptances over trials.
    pub error_rate: f64,
    /// Verdict-less trials over trials.
    pub no_decision_rate: f64,
    pub mean_observations: f64,
    pub median_observations: f64,
    /// `(level, value)` pairs; values are lower empirical quantiles.
    pub quantiles: Vec<(f64, f64)>,
    pub min_observations: u64,
    pub max_observations: u64,
}

impl Aggregates {
    /// Levels reported in [`Aggregates::quantiles`].
    pub const QUANTILE_LEVELS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];

    pub fn from_records(records: &[TrialRecord]) -> Aggregates {
        assert!(!records.is_empty(), "aggregates need at least one record");
        let n = records.len();
        let wrong = records
            .iter()
            .filter(|r| r.color_accepted.is_some() && !r.correct)
            .count();
        let none = records.iter().filter(|r| r.color_accepted.is_none()).count();
        let mut obs: Vec<u64> = records.iter().map(|r| r.observations).collect();
        obs.sort_unstable();
        // Lower empirical quantile: smallest order statistic covering level q.
        let quantile = |q: f64| -> f64 {
            let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
            obs[idx] as f64
        };
        Aggregates {
            trials: n as u64,
            error_rate: wrong as f64 / n as f64,
            no_decision_rate: none as f64 / n as f64,
            mean_observations: obs.iter().sum::<u64>() as f64 / n as f64,
            median_observations: quantile(0.5),
            quantiles: Self::QUANTILE_LEVELS
                .iter()
                .map(|&q| (q, quantile(q)))
                .collect(),
            min_observations: obs[0],
            max_observations: obs[n - 1],
        }
    }
}

/// Per-stage build facts echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    /// Schedule index (1-based) of this executed stage.
    pub s: usize,
    /// Repetition count actually used.
    pub k: u64,
    /// Repetition budget of the schedule.
    pub kbar: u64,
    pub eps_s: f64,
    pub r_s: f64,
    pub delta_s: f64,
    pub cells: usize,
    /// Detector pairs stored for this stage.
    pub detectors: usize,
}

/// Summary of the built test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub stages: Vec<StageMeta>,
    /// Observations needed to run every stage to completion.
    pub max_observations: u64,
    pub num_bodies: usize,
    pub num_colors: usize,
}

impl BuildMetadata {
    pub fn from_test(test: &SequentialTest) -> BuildMetadata {
        let stages = test
            .stages
            .iter()
            .map(|st| {
                let n = st.cells.len();
                let mut detectors = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        if st.detectors.pair(i, j).is_some() {
                            detectors += 1;
                        }
                    }
                }
                StageMeta {
                    s: st.s,
                    k: st.k_s,
                    kbar: st.kbar_s,
                    eps_s: st.eps_s,
                    r_s: st.r_s,
                    delta_s: st.delta_s,
                    cells: n,
                    detectors,
                }
            })
            .collect();
        BuildMetadata {
            stages,
            max_observations: test.max_observations(),
            num_bodies: test.family.num_bodies(),
            num_colors: test.family.num_colors(),
        }
    }
}

/// Everything an experiment produced: config echo, build facts, per-trial
/// records, and aggregates recomputable from the records.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub build: BuildMetadata,
    pub records: Vec<TrialRecord>,
    pub aggregates: Aggregates,
}

/// Prepared parameter source shared by all trials.
enum MuSampler {
    /// Per-body cumulative volume weights.
    Uniform { cumulative: Vec<f64>, total: f64 },
    /// Precomputed points with their true colors, cycled by trial index.
    Cycle { points: Vec<(Vec<f64>, usize)> },
}

impl MuSampler {
    fn prepare(cfg: &ExperimentConfig, test: &SequentialTest) -> Result<MuSampler> {
        let family = &test.family;
        match &cfg.mu_sampling {
            MuSampling::Uniform => {
                // Stream 0 is reserved for this weighting pass; trials use
                // streams 1.. so weights never perturb trial randomness.
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(0);
                let mut cumulative = Vec::with_capacity(family.num_bodies());
                let mut total = 0.0;
                for body in family.bodies() {
                    let (v, _) = region_volume(body, &[], &mut rng, WEIGHT_SAMPLES)?;
                    total += v;
                    cumulative.push(total);
                }
                if !(total > 0.0) {
                    return Err(Error::ConfigError(
                        "uniform sampling needs a body of positive volume; \
                         use fixed points for degenerate bodies"
                            .into(),
                    ));
                }
                Ok(MuSampler::Uniform { cumulative, total })
            }
            MuSampling::Grid { resolution } => {
                let res = *resolution;
                let n = family.scheme().dim();
                let count = (res as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
                if count > MAX_GRID_POINTS {
                    return Err(Error::ConfigError(format!(
                        "grid of {res}^{n} points exceeds the {MAX_GRID_POINTS} cap"
                    )));
                }
                let (lo, hi) = union_bounding_box(family);
                let mut points = Vec::new();
                let mut index = vec![0usize; n];
                loop {
                    let p: Vec<f64> = (0..n)
                        .map(|i| lo[i] + (hi[i] - lo[i]) * index[i] as f64 / (res - 1) as f64)
                        .collect();
                    if let Some(color) = color_at(family, &p) {
                        points.push((p, color));
                    }
                    // Odometer increment over the n-dimensional index.
                    let mut axis = 0;
                    loop {
                        if axis == n {
                            break;
                        }
                        index[axis] += 1;
                        if index[axis] < res {
                            break;
                        }
                        index[axis] = 0;
                        axis += 1;
                    }
                    if axis == n {
                        break;
                    }
                }
                if points.is_empty() {
                    return Err(Error::ConfigError(
                        "no grid point lands inside any body".into(),
                    ));
                }
                Ok(MuSampler::Cycle { points })
            }
            MuSampling::Fixed { points } => {
                let mut prepared = Vec::with_capacity(points.len());
                for (i, p) in points.iter().enumerate() {
                    match color_at(family, p) {
                        Some(color) => prepared.push((p.clone(), color)),
                        None => {
                            return Err(Error::ConfigError(format!(
                                "fixed point {i} lies in none of the bodies"
                            )))
                        }
                    }
                }
                Ok(MuSampler::Cycle { points: prepared })
            }
        }
    }

    fn draw(
        &self,
        test: &SequentialTest,
        rng: &mut ChaCha8Rng,
        trial: u64,
    ) -> Result<(Vec<f64>, usize)> {
        match self {
            MuSampler::Uniform { cumulative, total } => {
                let u = rng.random_range(0.0..*total);
                let j = cumulative.iter().position(|&c| u < c).unwrap_or(0);
                let mu = sample_uniform(&test.family.bodies()[j], rng, SAMPLE_TRIES)?;
                Ok((mu, test.family.color_of(j)))
            }
            MuSampler::Cycle { points } => {
                let (p, color) = &points[(trial % points.len() as u64) as usize];
                Ok((p.clone(), *color))
            }
        }
    }
}

fn union_bounding_box(family: &crate::sequential::HypothesisFamily) -> (Vec<f64>, Vec<f64>) {
    let n = family.scheme().dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for body in family.bodies() {
        let (bl, bh) = body.bounding_box();
        for i in 0..n {
            lo[i] = lo[i].min(bl[i]);
            hi[i] = hi[i].max(bh[i]);
        }
    }
    (lo, hi)
}

/// Color of the first body containing `p`, if any.
fn color_at(family: &crate::sequential::HypothesisFamily, p: &[f64]) -> Option<usize> {
    family
        .bodies()
        .iter()
        .position(|b| b.contains(p, MEMBERSHIP_TOL))
        .map(|j| family.color_of(j))
}

fn run_trial(
    cfg: &ExperimentConfig,
    test: &SequentialTest,
    sampler: &MuSampler,
    trial: u64,
) -> Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial + 1);
    let (mu, color_true) = sampler.draw(test, &mut rng, trial)?;
    let scheme = *test.family.scheme();
    let verdict =
        run_sequential_streaming(test, || Ok(scheme.sample_one_unchecked(&mu, &mut rng)), false)?;
    let s_star = analysis::s_star(&mu, test)?;
    let correct = verdict.accepted_color == Some(color_true);
    Ok(TrialRecord {
        trial,
        mu,
        color_true,
        color_accepted: verdict.accepted_color,
        stage: verdict.stage,
        observations: verdict.observations_used,
        correct,
        s_star,
    })
}

/// Builds the test described by `cfg` and runs its trials.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let test = build_sequential(cfg.family()?, &cfg.schedule_config())?;
    run_experiment_with(cfg, &test)
}

/// Runs `cfg`'s trials against an already-built test. Trials are independent
/// (one generator stream per trial index), so results do not depend on the
/// rayon thread count, and reruns with the same config are identical.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    test: &SequentialTest,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let sampler = MuSampler::prepare(cfg, test)?;
    let outcomes: Vec<Result<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, test, &sampler, t))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        records.push(outcome?);
    }
    let aggregates = Aggregates::from_records(&records);
    Ok(ExperimentReport {
        config: cfg.clone(),
        build: BuildMetadata::from_test(test),
        records,
        aggregates,
    })
}

/// Runs a single traced trial against an already-built test.
///
/// When `mu` is given it replaces the config's sampling (the point must lie
/// in one of the bodies); otherwise the first trial's parameter is drawn
/// exactly as [`run_experiment_with`] would draw it. Returns the trial
/// outcome together with the per-stage acceptance sets.
pub fn simulate_trial(
    cfg: &ExperimentConfig,
    test: &SequentialTest,
    mu: Option<Vec<f64>>,
) -> Result<(TrialRecord, Vec<StageRecord>)> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(point) = mu {
        cfg.mu_sampling = MuSampling::Fixed {
            points: vec![point],
        };
    }
    let sampler = MuSampler::prepare(&cfg, test)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let (mu, color_true) = sampler.draw(test, &mut rng, 0)?;
    let scheme = *test.family.scheme();
    let verdict =
        run_sequential_streaming(test, || Ok(scheme.sample_one_unchecked(&mu, &mut rng)), true)?;
    let s_star = analysis::s_star(&mu, test)?;
    let correct = verdict.accepted_color == Some(color_true);
    let trace = verdict.trace.unwrap_or_default();
    Ok((
        TrialRecord {
            trial: 0,
            mu,
            color_true,
            color_accepted: verdict.accepted_color,
            stage: verdict.stage,
            observations: verdict.observations_used,
            correct,
            s_star,
        },
        trace,
    ))
}
