//! Deterministic text output: CSV tables and the JSON report document.
//!
//! Numbers are written with fixed 17-significant-digit scientific notation so
//! identical runs produce byte-identical files.

use super::calibrate::CalibrationReport;
use super::config::{ExperimentConfig, CONFIG_VERSION};
use super::experiment::{Aggregates, BuildMetadata, ExperimentReport, TrialRecord};
use super::profile::ProfileRow;
use super::volumes::VolumeRow;
use crate::error::Result;
use crate::sequential::CutPolicy;
use serde::Serialize;
use std::fmt::Write as _;

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn policy_name(policy: CutPolicy) -> &'static str {
    match policy {
        CutPolicy::Default => "default",
        CutPolicy::Smart => "smart",
    }
}

/// One row per trial: stream seed, parameter coordinates, true and accepted
/// colors (accepted empty when no verdict), stopping stage, observations
/// consumed, and the first accepting stage of the parameter.
pub fn trials_csv(seed: u64, records: &[TrialRecord]) -> String {
    let n = records.first().map_or(0, |r| r.mu.len());
    let mut out = String::from("trial,seed");
    for i in 0..n {
        let _ = write!(out, ",mu_{i}");
    }
    out.push_str(",color_true,color_accepted,stage,observations,s_star\n");
    for r in records {
        let _ = write!(out, "{},{}", r.trial, seed);
        for v in &r.mu {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        let accepted = r
            .color_accepted
            .map(|c| c.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            r.color_true, accepted, r.stage, r.observations, r.s_star
        );
    }
    out
}

/// One row per (dimension, cut policy, margin source) combination.
pub fn volumes_csv(rows: &[VolumeRow]) -> String {
    let mut out = String::from("n,policy,r_source,r,volume,stderr\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.n,
            policy_name(row.policy),
            row.r_source,
            fmt_float(row.r),
            fmt_float(row.volume),
            fmt_float(row.stderr)
        );
    }
    out
}

/// One row per grid point; cost columns are empty outside the bodies.
pub fn profile_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from("x,y,ln_k_sstar,ln_k_sbar\n");
    for row in rows {
        let star = row.ln_k_sstar.map(fmt_float).unwrap_or_default();
        let bar = row.ln_k_sbar.map(fmt_float).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_float(row.x),
            fmt_float(row.y),
            star,
            bar
        );
    }
    out
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    build: &'a BuildMetadata,
    aggregates: &'a Aggregates,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<&'a CalibrationReport>,
}

/// The JSON report: config echo, build metadata (per-stage repetition
/// counts, tolerances, margins), and aggregates. Per-trial records are left
/// to [`trials_csv`].
pub fn report_json(report: &ExperimentReport) -> Result<String> {
    report_json_with(report, None)
}

/// [`report_json`] with an embedded calibration block.
pub fn report_json_with(
    report: &ExperimentReport,
    calibration: Option<&CalibrationReport>,
) -> Result<String> {
    let doc = ReportDoc {
        version: CONFIG_VERSION,
        config: &report.config,
        build: &report.build,
        aggregates: &report.aggregates,
        calibration,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}
