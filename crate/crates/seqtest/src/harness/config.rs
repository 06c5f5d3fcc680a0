//! Experiment configuration: a JSON document describing a hypothesis family,
//! a stage schedule, and a Monte Carlo experiment over it.

use crate::convexgeom::ConvexBody;
use crate::error::{Error, Result};
use crate::schemes::Scheme;
use crate::sequential::{CutPolicy, HypothesisFamily, ScheduleConfig, StageSchedule};
use serde::{Deserialize, Serialize};

/// Schema tag expected in the `version` field of config documents.
pub const CONFIG_VERSION: &str = "v1";

/// One body in a config document: an axis-aligned box or an H-polytope
/// (`A x <= b`); a polytope with `"simplex": true` is additionally restricted
/// to the probability simplex, as Discrete-scheme bodies must be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BodySpec {
    #[serde(rename = "box")]
    Box { lower: Vec<f64>, upper: Vec<f64> },
    #[serde(rename = "polytope")]
    Polytope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        simplex: bool,
    },
}

impl BodySpec {
    pub fn to_body(&self) -> Result<ConvexBody> {
        match self {
            BodySpec::Box { lower, upper } => ConvexBody::new_box(lower.clone(), upper.clone()),
            BodySpec::Polytope { a, b, simplex } => {
                if *simplex {
                    ConvexBody::simplex_polytope(a.clone(), b.clone(), None)
                } else {
                    ConvexBody::polytope(a.clone(), b.clone())
                }
            }
        }
    }

    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BodySpec::Box { lower, upper }
    }
}

/// How trial parameters are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuSampling {
    /// Uniform over the union of the bodies, weighted by body volume.
    Uniform,
    /// The points of a regular grid over the union's bounding box that land
    /// inside some body, cycled through in order.
    Grid { resolution: usize },
    /// An explicit list of parameters, cycled through in order.
    Fixed { points: Vec<Vec<f64>> },
}

impl Default for MuSampling {
    fn default() -> Self {
        MuSampling::Uniform
    }
}

/// Optional replacements for schedule-derived quantities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    /// Fixed stage count instead of the smallest feasible one.
    #[serde(default)]
    pub stages: Option<usize>,
    /// Per-stage margin table replacing the schedule-derived `r(s)`.
    #[serde(default)]
    pub r: Option<Vec<f64>>,
}

fn default_trials() -> u64 {
    2000
}

/// Full description of one experiment. Serializes to the `v1` JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Schema tag; must equal [`CONFIG_VERSION`].
    pub version: String,
    pub scheme: Scheme,
    pub bodies: Vec<BodySpec>,
    /// Color label per body; labels must cover `0..num_colors`.
    pub colors: Vec<usize>,
    /// Overall risk budget of the built test.
    pub eps: f64,
    #[serde(default)]
    pub kbar: StageSchedule,
    #[serde(default)]
    pub cut_policy: CutPolicy,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu_sampling: MuSampling,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ExperimentConfig {
    /// Minimal config with harness defaults (2000 uniform trials, seed 0,
    /// doubling budgets, gradient cuts).
    pub fn new(scheme: Scheme, bodies: Vec<BodySpec>, colors: Vec<usize>, eps: f64) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION.to_string(),
            scheme,
            bodies,
            colors,
            eps,
            kbar: StageSchedule::default(),
            cut_policy: CutPolicy::default(),
            trials: default_trials(),
            seed: 0,
            mu_sampling: MuSampling::default(),
            overrides: Overrides::default(),
        }
    }

    /// Structural validation that does not require solving anything.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::ConfigError(format!(
                "unsupported config version {:?}, expected {CONFIG_VERSION:?}",
                self.version
            )));
        }
        if self.scheme.dim() == 0 {
            return Err(Error::ConfigError("scheme dimension must be >= 1".into()));
        }
        if self.bodies.is_empty() {
            return Err(Error::ConfigError("config lists no bodies".into()));
        }
        if self.colors.len() != self.bodies.len() {
            return Err(Error::ConfigError(format!(
                "{} bodies but {} color labels",
                self.bodies.len(),
                self.colors.len()
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::ConfigError(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if self.trials < 1 {
            return Err(Error::ConfigError("trials must be >= 1".into()));
        }
        match &self.mu_sampling {
            MuSampling::Uniform => {}
            MuSampling::Grid { resolution } => {
                if *resolution < 2 {
                    return Err(Error::ConfigError(format!(
                        "grid resolution must be >= 2, got {resolution}"
                    )));
                }
            }
            MuSampling::Fixed { points } => {
                if points.is_empty() {
                    return Err(Error::ConfigError("fixed sampling lists no points".into()));
                }
                for (i, p) in points.iter().enumerate() {
                    if p.len() != self.scheme.dim() {
                        return Err(Error::ConfigError(format!(
                            "fixed point {i} has dimension {}, scheme expects {}",
                            p.len(),
                            self.scheme.dim()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds the hypothesis family, running full construction-time checks
    /// (body validity, color coverage, cross-color separation).
    pub fn family(&self) -> Result<HypothesisFamily> {
        self.validate()?;
        let bodies = self
            .bodies
            .iter()
            .map(BodySpec::to_body)
            .collect::<Result<Vec<_>>>()?;
        HypothesisFamily::new(self.scheme, bodies, self.colors.clone())
    }

    /// The schedule part of the config.
    pub fn schedule_config(&self) -> ScheduleConfig {
        ScheduleConfig {
            eps: self.eps,
            kbar: self.kbar.clone(),
            cut_policy: self.cut_policy,
            stage_override: self.overrides.stages,
            r_override: self.overrides.r.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::ConfigError(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut doc = serde_json::to_string_pretty(self)?;
        doc.push('\n');
        Ok(doc)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
