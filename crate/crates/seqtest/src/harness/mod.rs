//! Config-driven Monte Carlo experiments over built sequential tests.
//!
//! The harness turns a JSON-loadable [`ExperimentConfig`] into:
//!
//! * [`run_experiment`]: seeded trials drawing a true parameter, streaming
//!   observations through the test, and recording verdicts;
//! * [`volumes_report`]: per-dimension discarded-cell volumes for the
//!   two-box template under both cut policies;
//! * [`profile_grid`]: a 2-D grid of log observation costs at the accepting
//!   stage and at its analytic bound;
//! * [`calibrate_risk`]: Wilson-interval checks that the frequency of bad
//!   outcomes stays within the configured risk.
//!
//! Everything is deterministic given the config's seed: trials use one
//! counter-based generator stream per trial index, so results do not depend
//! on thread count; CSV and JSON writers format numbers with fixed precision
//! so reruns are byte-identical.

mod calibrate;
mod config;
mod csvio;
mod experiment;
mod profile;
mod templates;
mod volumes;

pub use calibrate::{calibrate_risk, calibrate_risk_full, wilson_interval, CalibrationReport};
pub use config::{BodySpec, ExperimentConfig, MuSampling, Overrides, CONFIG_VERSION};
pub use csvio::{profile_csv, report_json, report_json_with, trials_csv, volumes_csv};
pub use experiment::{
    run_experiment, run_experiment_with, simulate_trial, Aggregates, BuildMetadata,
    ExperimentReport, StageMeta, TrialRecord,
};
pub use profile::{profile_grid, ProfileRow};
pub use templates::{four_squares_config, two_box_config};
pub use volumes::{volumes_report, VolumeRow, VolumesRequest};
