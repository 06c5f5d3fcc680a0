//! Empirical risk calibration with Wilson confidence intervals.
//!
//! A trial is *bad* when the test accepts a wrong color, reaches no verdict,
//! or accepts the right color later than the parameter's accepting stage.
//! The built test promises the bad-event probability stays at or below the
//! configured risk; calibration estimates that probability and flags runs
//! whose confidence interval excludes the promise.

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, ExperimentReport, TrialRecord};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
const WILSON_Z: f64 = 1.959963984540054;

/// Calibration outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub trials: u64,
    /// Risk budget the test was built for.
    pub eps: f64,
    /// Wrong-color acceptances over trials.
    pub wrong_rate: f64,
    /// Verdict-less trials over trials.
    pub no_decision_rate: f64,
    /// Correct verdicts arriving after the parameter's accepting stage.
    pub late_rate: f64,
    /// Union of the three above.
    pub bad_rate: f64,
    /// Wilson 95% interval for the bad-event probability.
    pub ci_low: f64,
    pub ci_high: f64,
    /// True when even the interval's lower end exceeds the risk budget.
    pub violation: bool,
}

/// Wilson 95% score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Classifies records against the risk budget `eps`.
pub(super) fn calibration_from_records(records: &[TrialRecord], eps: f64) -> CalibrationReport {
    let n = records.len() as u64;
    let mut wrong = 0u64;
    let mut none = 0u64;
    let mut late = 0u64;
    for r in records {
        match r.color_accepted {
            None => none += 1,
            Some(_) if !r.correct => wrong += 1,
            Some(_) => {
                if r.stage > r.s_star {
                    late += 1;
                }
            }
        }
    }
    let bad = wrong + none + late;
    let (ci_low, ci_high) = wilson_interval(bad, n);
    CalibrationReport {
        trials: n,
        eps,
        wrong_rate: wrong as f64 / n as f64,
        no_decision_rate: none as f64 / n as f64,
        late_rate: late as f64 / n as f64,
        bad_rate: bad as f64 / n as f64,
        ci_low,
        ci_high,
        violation: ci_low > eps,
    }
}

/// Runs the config's trials and calibrates the bad-event rate against its
/// risk budget. Requires at least 500 trials for a meaningful interval.
pub fn calibrate_risk(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    calibrate_risk_full(cfg).map(|(cal, _)| cal)
}

/// [`calibrate_risk`] returning the underlying experiment as well.
pub fn calibrate_risk_full(
    cfg: &ExperimentConfig,
) -> Result<(CalibrationReport, ExperimentReport)> {
    if cfg.trials < 500 {
        return Err(Error::ConfigError(format!(
            "calibration needs at least 500 trials, got {}",
            cfg.trials
        )));
    }
    let report = run_experiment(cfg)?;
    let calibration = calibration_from_records(&report.records, cfg.eps);
    Ok((calibration, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::templates::two_box_config;

    #[test]
    fn wilson_intervals_behave_at_the_edges() {
        let (lo, hi) = wilson_interval(0, 100);
        assert!(lo.abs() < 1e-15);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(100, 100);
        assert!(lo > 0.95 && lo < 1.0);
        assert!((hi - 1.0).abs() < 1e-15);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && 0.5 < hi);
        // Interval shrinks with more data at the same rate.
        let (lo2, hi2) = wilson_interval(500, 1000);
        assert!(hi2 - lo2 < hi - lo);
    }

    #[test]
    fn classification_covers_all_outcome_kinds() {
        let mk = |accepted: Option<usize>, stage: usize, s_star: usize| TrialRecord {
            trial: 0,
            mu: vec![0.0],
            color_true: 0,
            color_accepted: accepted,
            stage,
            observations: 1,
            correct: accepted == Some(0),
            s_star,
        };
        let records = vec![
            mk(Some(0), 2, 3), // on time
            mk(Some(0), 4, 3), // late
            mk(Some(1), 2, 3), // wrong
            mk(None, 2, 3),    // no verdict
        ];
        let cal = calibration_from_records(&records, 0.1);
        assert_eq!(cal.wrong_rate, 0.25);
        assert_eq!(cal.no_decision_rate, 0.25);
        assert_eq!(cal.late_rate, 0.25);
        assert_eq!(cal.bad_rate, 0.75);
        assert!(cal.violation);
    }

    #[test]
    fn easy_families_calibrate_cleanly() {
        let mut cfg = two_box_config(1, 2.0, 0.1);
        cfg.trials = 512;
        cfg.seed = 23;
        let cal = calibrate_risk(&cfg).unwrap();
        assert_eq!(cal.trials, 512);
        assert!(cal.bad_rate <= 0.1 + 4.0 * (0.1f64 * 0.9 / 512.0).sqrt());
        assert!(!cal.violation);

        cfg.trials = 100;
        assert!(matches!(
            calibrate_risk(&cfg),
            Err(Error::ConfigError(_))
        ));
    }
}
