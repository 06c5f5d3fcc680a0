//! Stopping-cost profiles over a 2-D parameter grid.

use super::config::ExperimentConfig;
use crate::analysis::{s_bar_gaussian, s_star, separation_default};
use crate::error::{Error, Result};
use crate::schemes::SchemeKind;
use crate::sequential::build_sequential;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One grid point. The cost columns are `None` outside the bodies (and the
/// bound column also when the bound does not apply to the test's cut policy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub x: f64,
    pub y: f64,
    /// `ln k` at the first stage whose accepting region contains the point.
    pub ln_k_sstar: Option<f64>,
    /// `ln k` at the analytic stage bound.
    pub ln_k_sbar: Option<f64>,
}

/// Evaluates `ln k(s)` at the accepting stage and at its analytic bound over
/// a `resolution x resolution` grid spanning the union's bounding box.
/// Requires a two-dimensional Gaussian family.
pub fn profile_grid(cfg: &ExperimentConfig, resolution: usize) -> Result<Vec<ProfileRow>> {
    cfg.validate()?;
    if resolution < 2 {
        return Err(Error::ConfigError(format!(
            "grid resolution must be >= 2, got {resolution}"
        )));
    }
    let family = cfg.family()?;
    if family.scheme().kind != SchemeKind::Gaussian {
        return Err(Error::Unsupported(
            "cost profiles need a Gaussian scheme".to_string(),
        ));
    }
    if family.scheme().dim() != 2 {
        return Err(Error::Unsupported(
            "cost profiles are two-dimensional".to_string(),
        ));
    }
    let test = build_sequential(family, &cfg.schedule_config())?;
    let sep = separation_default(&test.family)?;

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for body in test.family.bodies() {
        let (bl, bh) = body.bounding_box();
        for i in 0..2 {
            lo[i] = lo[i].min(bl[i]);
            hi[i] = hi[i].max(bh[i]);
        }
    }

    let outcomes: Vec<Result<ProfileRow>> = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % resolution;
            let iy = idx / resolution;
            let x = lo[0] + (hi[0] - lo[0]) * ix as f64 / (resolution - 1) as f64;
            let y = lo[1] + (hi[1] - lo[1]) * iy as f64 / (resolution - 1) as f64;
            let mu = [x, y];
            if !test.family.bodies().iter().any(|b| b.contains(&mu, 1e-9)) {
                return Ok(ProfileRow {
                    x,
                    y,
                    ln_k_sstar: None,
                    ln_k_sbar: None,
                });
            }
            let star = s_star(&mu, &test)?;
            let ln_k_sstar = Some((test.stages[star - 1].k_s as f64).ln());
            let ln_k_sbar = match s_bar_gaussian(&mu, &test, &sep) {
                Ok(bar) => Some((test.stages[bar - 1].k_s as f64).ln()),
                Err(Error::Unsupported(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(ProfileRow {
                x,
                y,
                ln_k_sstar,
                ln_k_sbar,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        rows.push(outcome?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::templates::two_box_config;

    #[test]
    fn profiles_cover_the_grid_and_respect_depth() {
        let cfg = two_box_config(2, 0.1, 0.01);
        let res = 9;
        let rows = profile_grid(&cfg, res).unwrap();
        assert_eq!(rows.len(), res * res);

        // The gap between the boxes produces missing cells.
        assert!(rows.iter().any(|r| r.ln_k_sstar.is_none()));
        let present: Vec<&ProfileRow> =
            rows.iter().filter(|r| r.ln_k_sstar.is_some()).collect();
        assert!(!present.is_empty());
        for row in &present {
            let star = row.ln_k_sstar.unwrap();
            let bar = row.ln_k_sbar.unwrap();
            // Deeper acceptance can only be cheaper than its bound.
            assert!(star <= bar + 1e-12);
        }

        // A deep corner is cheaper than a point closer to the facing edge.
        let deep = rows
            .iter()
            .find(|r| r.x > 1.0 && r.y > 0.9)
            .and_then(|r| r.ln_k_sstar)
            .unwrap();
        let shallow = rows
            .iter()
            .filter(|r| r.x > 0.3 && r.x < 0.35)
            .find_map(|r| r.ln_k_sstar)
            .unwrap();
        assert!(deep < shallow);
    }

    #[test]
    fn non_gaussian_profiles_are_unsupported() {
        let mut cfg = two_box_config(2, 0.1, 0.01);
        cfg.scheme = crate::schemes::Scheme::new(SchemeKind::Poisson, 2).unwrap();
        // The template bodies cross zero, so swap in valid Poisson boxes.
        cfg.bodies = vec![
            super::super::config::BodySpec::new_box(vec![0.5, 0.5], vec![1.0, 1.0]),
            super::super::config::BodySpec::new_box(vec![4.0, 4.0], vec![5.0, 5.0]),
        ];
        assert!(matches!(
            profile_grid(&cfg, 4),
            Err(Error::Unsupported(_))
        ));
    }
}
