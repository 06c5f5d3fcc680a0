//! Performance analysis for built tests.
//!
//! This module measures how hard a hypothesis family is and how fast a built
//! test resolves a particular parameter:
//!
//! * [`separation`] computes the family's separation exponent `d`, the
//!   smallest negated affinity exponent over cross-color body pairs.
//! * [`k_plus`] turns `(eps, d)` into a lower bound on the expected number of
//!   observations any valid procedure needs near the hardest pair.
//! * [`worst_case_bound`] bounds the total observation budget of the built
//!   schedule in terms of the body count, `eps`, `d`, and a slack constant.
//! * [`s_star`] finds the first executed stage whose accepting region already
//!   contains a given parameter, i.e. the stage at which the test can stop.
//! * [`s_bar_gaussian`] upper-bounds that stage analytically for Gaussian
//!   families with gradient cuts, using the inscribed-ball radius at `mu`.

use crate::convexgeom::{solve_pairwise, ConvexBody};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::schemes::SchemeKind;
use crate::sequential::{CellKind, CutPolicy, HypothesisFamily, SequentialTest, CELL_SOLVE_TOL};
use rayon::prelude::*;

/// Default slack constant for the worst-case budget premise.
pub const DEFAULT_KAPPA: f64 = 5.0;

/// Separation structure of a hypothesis family.
#[derive(Debug, Clone)]
pub struct SeparationReport {
    /// Smallest `-psi` over body pairs with different colors.
    pub d: f64,
    /// Pair of body indices attaining `d` (first such pair in row order).
    pub argmin: (usize, usize),
    /// Affinity exponents per body pair; `None` on the diagonal and for
    /// same-color pairs, which are never solved.
    pub psi: Vec<Vec<Option<f64>>>,
}

/// Stage bounds for one parameter value under one built test.
#[derive(Debug, Clone)]
pub struct StageBoundReport {
    /// First executed stage whose accepting region contains the parameter.
    pub s_star: usize,
    /// Analytic upper bound for `s_star`; `None` when the scheme or cut
    /// policy is outside the Gaussian gradient-cut case the bound covers.
    pub s_bar: Option<usize>,
    /// Inscribed-ball radius of the parameter inside its body.
    pub rho: f64,
    /// Slack constant carried along for downstream budget checks.
    pub kappa: f64,
}

/// Computes the separation exponent of a family by solving every cross-color
/// pair to tolerance `tol`.
///
/// Errors with [`Error::AssumptionViolated`] if any cross-color pair has an
/// affinity exponent at or above `-1e-12`, i.e. the colors are not actually
/// separated at solver resolution.
pub fn separation(family: &HypothesisFamily, tol: f64) -> Result<SeparationReport> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be a positive finite number, got {tol}"),
        });
    }
    let bodies = family.bodies();
    let colors = family.colors();
    let n = bodies.len();

    let mut pairs = Vec::new();
    for j in 0..n {
        for j2 in (j + 1)..n {
            if colors[j] != colors[j2] {
                pairs.push((j, j2));
            }
        }
    }

    let solved: Vec<Result<(usize, usize, f64)>> = pairs
        .par_iter()
        .map(|&(j, j2)| {
            let sp = solve_pairwise(family.scheme(), &bodies[j], &bodies[j2], tol)?;
            Ok((j, j2, sp.opt))
        })
        .collect();

    let mut psi = vec![vec![None; n]; n];
    let mut d = f64::INFINITY;
    let mut argmin = (0usize, 0usize);
    for entry in solved {
        let (j, j2, opt) = entry?;
        if opt >= -1e-12 {
            return Err(Error::AssumptionViolated(format!(
                "bodies {j} and {j2} carry different colors but are not \
                 separated: affinity exponent {opt:.3e} is above -1e-12"
            )));
        }
        psi[j][j2] = Some(opt);
        psi[j2][j] = Some(opt);
        if -opt < d {
            d = -opt;
            argmin = (j, j2);
        }
    }

    Ok(SeparationReport { d, argmin, psi })
}

/// Convenience: separation solved at the default cell tolerance.
pub fn separation_default(family: &HypothesisFamily) -> Result<SeparationReport> {
    separation(family, CELL_SOLVE_TOL)
}

/// Lower bound on the expected observation count of any procedure that is
/// `eps`-reliable on a family with separation exponent `d`.
///
/// Returns `(k_plus, floor)`, where `floor = ln(1/eps) / (4 d)` is the
/// simpler bound that `k_plus` refines.
///
/// Requires `eps` in `(0, 1/4)` and `d > 0`.
pub fn k_plus(eps: f64, d: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must lie in (0, 1/4), got {eps}"),
        });
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: format!("must be a positive finite separation exponent, got {d}"),
        });
    }
    let ln_inv = (1.0 / eps).ln();
    let value = (0.5 * ln_inv - std::f64::consts::LN_2) / d;
    let floor = ln_inv / (4.0 * d);
    Ok((value, floor))
}

/// Worst-case total observation budget of the doubling schedule.
///
/// Returns `(holds_premise, bound)`: the premise
/// `ln(1/d) <= kappa ln(J^2/eps)` states that the separation exponent is not
/// exponentially small relative to the problem size, and under it the total
/// budget is at most `bound = max(1, 5 kappa ln(J^2/eps) / d)`.
///
/// Requires `j_count >= 2`, `eps` in `(0, 1/4)`, `d > 0`, and `kappa >= 1`.
pub fn worst_case_bound(j_count: usize, eps: f64, d: f64, kappa: f64) -> Result<(bool, f64)> {
    if j_count < 2 {
        return Err(Error::InvalidParameter {
            name: "j_count",
            reason: format!("need at least two bodies, got {j_count}"),
        });
    }
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must lie in (0, 1/4), got {eps}"),
        });
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: format!("must be a positive finite separation exponent, got {d}"),
        });
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: format!("must be >= 1, got {kappa}"),
        });
    }
    let j = j_count as f64;
    let ln_term = (j * j / eps).ln();
    let holds_premise = (1.0 / d).ln() <= kappa * ln_term;
    let bound = (5.0 * kappa * ln_term / d).max(1.0);
    Ok((holds_premise, bound))
}

/// Membership tolerance used when locating a parameter inside bodies and
/// cells.
const MEMBERSHIP_TOL: f64 = 1e-9;

fn containing_bodies(family: &HypothesisFamily, mu: &[f64]) -> Vec<usize> {
    family
        .bodies()
        .iter()
        .enumerate()
        .filter(|(_, body)| body.contains(mu, MEMBERSHIP_TOL))
        .map(|(j, _)| j)
        .collect()
}

/// First executed stage at which the test's accepting region contains `mu`,
/// i.e. the smallest stage index (in execution order, 1-based) with a fully
/// retained cell of a body containing `mu`.
///
/// Errors with [`Error::InputError`] if `mu` lies in none of the family's
/// bodies.
pub fn s_star(mu: &[f64], test: &SequentialTest) -> Result<usize> {
    let family = &test.family;
    if mu.len() != family.scheme().dim() {
        return Err(Error::InputError(format!(
            "parameter has dimension {}, family expects {}",
            mu.len(),
            family.scheme().dim()
        )));
    }
    let owners = containing_bodies(family, mu);
    if owners.is_empty() {
        return Err(Error::InputError(
            "parameter lies in none of the family's bodies".to_string(),
        ));
    }
    for (idx, stage) in test.stages.iter().enumerate() {
        let hit = stage.cells.iter().any(|cell| {
            matches!(cell.kind, CellKind::Good)
                && owners.contains(&cell.origin)
                && cell.body.contains(mu, MEMBERSHIP_TOL)
        });
        if hit {
            return Ok(idx + 1);
        }
    }
    // The final stage keeps each body whole, so any in-body parameter is
    // accepted there; reaching this point means the test is inconsistent.
    Err(Error::AssumptionViolated(
        "no stage accepts a parameter that lies inside a body".to_string(),
    ))
}

/// Inscribed-ball radius of `mu` inside `body`: the distance from `mu` to the
/// nearest facet, clamped at zero.
fn inscribed_radius(body: &ConvexBody, mu: &[f64]) -> f64 {
    let mut rho = f64::INFINITY;
    match body {
        ConvexBody::Box { lower, upper } => {
            for i in 0..lower.len() {
                rho = rho.min(mu[i] - lower[i]).min(upper[i] - mu[i]);
            }
        }
        ConvexBody::Polytope { a, b, .. } => {
            for i in 0..a.rows() {
                let row = a.row(i);
                let scale = norm2(row);
                if scale > 0.0 {
                    rho = rho.min((b[i] - dot(row, mu)) / scale);
                }
            }
        }
    }
    rho.max(0.0)
}

/// Analytic upper bound for [`s_star`] in the Gaussian gradient-cut case.
///
/// Returns the first executed stage whose margin satisfies
/// `r_s <= d + sqrt(d/2) * rho(mu)`, where `rho(mu)` is the largest
/// inscribed-ball radius of `mu` over the bodies containing it. Deeper
/// parameters clear the bound at earlier (cheaper) stages; boundary
/// parameters only at the final one.
///
/// Errors with [`Error::Unsupported`] for non-Gaussian schemes or non-default
/// cut policies, and with [`Error::InputError`] if `mu` lies in no body.
pub fn s_bar_gaussian(
    mu: &[f64],
    test: &SequentialTest,
    sep: &SeparationReport,
) -> Result<usize> {
    let family = &test.family;
    if family.scheme().kind != SchemeKind::Gaussian {
        return Err(Error::Unsupported(
            "the stage upper bound is only available for Gaussian schemes".to_string(),
        ));
    }
    if test.cut_policy != CutPolicy::Default {
        return Err(Error::Unsupported(
            "the stage upper bound is only available for gradient cuts".to_string(),
        ));
    }
    if mu.len() != family.scheme().dim() {
        return Err(Error::InputError(format!(
            "parameter has dimension {}, family expects {}",
            mu.len(),
            family.scheme().dim()
        )));
    }
    let owners = containing_bodies(family, mu);
    if owners.is_empty() {
        return Err(Error::InputError(
            "parameter lies in none of the family's bodies".to_string(),
        ));
    }
    let rho = owners
        .iter()
        .map(|&j| inscribed_radius(&family.bodies()[j], mu))
        .fold(0.0f64, f64::max);
    let threshold = sep.d + (sep.d / 2.0).sqrt() * rho;
    for (idx, stage) in test.stages.iter().enumerate() {
        if stage.r_s <= threshold {
            return Ok(idx + 1);
        }
    }
    // The last scheduled stage has a margin below d <= threshold, so a fully
    // built test always clears the bound somewhere.
    Err(Error::AssumptionViolated(
        "no stage margin falls below the separation exponent".to_string(),
    ))
}

/// Bundles [`s_star`], [`s_bar_gaussian`], and the inscribed-ball radius for
/// one parameter. `kappa` defaults to [`DEFAULT_KAPPA`] when `None`.
///
/// `s_bar` is `None` when the analytic bound does not cover the test's scheme
/// or cut policy; unsupported combinations are not an error here.
pub fn stage_bounds(
    mu: &[f64],
    test: &SequentialTest,
    sep: &SeparationReport,
    kappa: Option<f64>,
) -> Result<StageBoundReport> {
    let kappa = kappa.unwrap_or(DEFAULT_KAPPA);
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: format!("must be >= 1, got {kappa}"),
        });
    }
    let star = s_star(mu, test)?;
    let s_bar = match s_bar_gaussian(mu, test, sep) {
        Ok(s) => Some(s),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let owners = containing_bodies(&test.family, mu);
    let rho = owners
        .iter()
        .map(|&j| inscribed_radius(&test.family.bodies()[j], mu))
        .fold(0.0f64, f64::max);
    if let Some(bar) = s_bar {
        if star > bar {
            return Err(Error::AssumptionViolated(format!(
                "accepting stage {star} exceeds its analytic bound {bar}"
            )));
        }
    }
    Ok(StageBoundReport {
        s_star: star,
        s_bar,
        rho,
        kappa,
    })
}
