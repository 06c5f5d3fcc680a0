//! Log-barrier machinery: analytic centers and barrier-based "smart" cuts
//! that separate the region still confusable with an opponent body from the
//! rest of a cell, minimizing the retained bad region's linear size.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Mat};
use crate::schemes::Scheme;

use super::body::{ConvexBody, Cut};
use super::saddle::{gaussian_box_saddle, solve_pairwise, RateEvaluator};

/// Newton iteration caps.
const CENTER_MAX_ITERS: usize = 200;
const CONTINUATION_MAX_ITERS: usize = 100;
const POLISH_MAX_ITERS: usize = 30;

/// Confusable-region depth below which it is treated as empty: if the best
/// achievable exponent clears `-r` by less than this, every point of the cell
/// already satisfies the margin (up to the validity slack).
const EMPTY_REGION_SLACK: f64 = 1e-10;

/// Self-concordance data for the cell barrier at the cut construction point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierInfo {
    /// Barrier parameter: the number of logarithm terms.
    pub theta: f64,
    /// Minimizer of the barrier over the confusable region.
    pub center: Vec<f64>,
    /// Barrier gradient at the center (the cut normal).
    pub gradient: Vec<f64>,
    /// Barrier Hessian at the center (row-major), positive definite.
    pub hessian: Vec<Vec<f64>>,
    /// Linear-size amplification factor `theta + 2 sqrt(theta)`.
    pub rho: f64,
}

/// Outcome of the barrier cut construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SmartCutResult {
    pub cut: Cut,
    /// Present unless the confusable region was empty.
    pub barrier: Option<BarrierInfo>,
    /// True when no point of the cell reaches exponent `-r` against the
    /// opponent; the returned cut then retains the whole cell.
    pub opponent_region_empty: bool,
}

/// Builds an affine cut on `x` whose retained side `l <= 0` is certified to
/// have worst-case exponent `<= -r` against the opponent of `psi_opponent`.
///
/// The cut is the barrier-gradient hyperplane at the barrier minimizer over
/// the confusable region `Y = {x in cell: psi(x) >= -r}`, computed by Newton
/// continuation on `F(x) - tau ln(psi(x) + r)` with `tau` driven to zero,
/// followed by a stationarity polish on the active constraint. Errors with
/// `CutInfeasible` when the cell's analytic center itself is confusable (no
/// hyperplane through the barrier center can shave anything off, e.g. when
/// the confusable region covers the cell).
pub fn smart_cut(
    scheme: &Scheme,
    cell: &ConvexBody,
    psi_opponent: &RateEvaluator,
    r: f64,
    tol: f64,
) -> Result<SmartCutResult> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("margin must be positive, got {r}"),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: "tolerance must be positive".into(),
        });
    }
    if psi_opponent.scheme() != scheme {
        return Err(Error::InputError(
            "evaluator scheme differs from the requested scheme".into(),
        ));
    }
    let n = cell.dim();
    let (_, radius) = cell.chebyshev_center()?;
    if radius <= 1e-12 {
        return Err(Error::Unsupported(
            "barrier cuts need a full-dimensional cell (positive inradius)".into(),
        ));
    }

    let barrier = CellBarrier::new(cell)?;
    let center = barrier.analytic_center()?;
    let (psi_center, _) = psi_opponent.value_grad(&center)?;
    if psi_center >= -r {
        return Err(Error::CutInfeasible(format!(
            "confusable region contains the cell's analytic center \
             (exponent {psi_center:.6e} >= -{r:.6e})"
        )));
    }

    // Depth of the confusable region: the best exponent achievable in the cell.
    let best = best_against_opponent(scheme, cell, psi_opponent, tol)?;
    if best.1 + r <= EMPTY_REGION_SLACK {
        return Ok(SmartCutResult {
            cut: Cut::keep_all(n),
            barrier: None,
            opponent_region_empty: true,
        });
    }

    // Strictly feasible start: pull the best point toward the analytic center
    // until both the cell slacks and the exponent margin are positive.
    let mut start = None;
    let mut beta = 0.5;
    for _ in 0..60 {
        let x: Vec<f64> = best
            .0
            .iter()
            .zip(&center)
            .map(|(p, c)| (1.0 - beta) * p + beta * c)
            .collect();
        let (psi, _) = psi_opponent.value_grad(&x)?;
        if psi + r > 0.0 && barrier.min_slack(&x) > 0.0 {
            start = Some(x);
            break;
        }
        beta *= 0.5;
    }
    let Some(mut x) = start else {
        return Err(Error::SolverFailure {
            context: "smart_cut",
            reason: "no strictly feasible start in the confusable region".into(),
        });
    };

    // Continuation: anneal the weight of the exponent-margin term to zero so
    // the iterate converges to the plain barrier minimizer over Y.
    let mut tau = 1.0;
    while tau >= 1e-8 {
        x = newton_on_augmented(&barrier, psi_opponent, r, tau, x)?;
        tau *= 0.1;
    }

    // Polish: Newton on the stationarity system of `min F s.t. psi = -r`.
    let (psi_x, gpsi) = psi_opponent.value_grad(&x)?;
    let mut lambda = 1e-8 / (psi_x + r).max(1e-300);
    if gpsi.iter().any(|v| *v != 0.0) {
        if let Ok(polished) = kkt_polish(&barrier, psi_opponent, r, x.clone(), &mut lambda) {
            x = polished;
        }
    }

    let g = barrier.gradient(&x);
    if norm2(&g) <= 1e-12 {
        return Err(Error::CutInfeasible(
            "barrier gradient vanishes at the construction point".into(),
        ));
    }
    let offset = -dot(&g, &x);
    let hess = barrier.hessian(&x);
    let theta = barrier.theta();
    Ok(SmartCutResult {
        cut: Cut::new(g.clone(), offset)?,
        barrier: Some(BarrierInfo {
            theta,
            center: x,
            gradient: g,
            hessian: hess.to_rows(),
            rho: theta + 2.0 * theta.sqrt(),
        }),
        opponent_region_empty: false,
    })
}

/// Best point of `cell` against the evaluator's opponent and its exponent.
fn best_against_opponent(
    scheme: &Scheme,
    cell: &ConvexBody,
    ev: &RateEvaluator,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let opp = ev.opponent();
    let sp = match gaussian_box_saddle(scheme, cell, opp) {
        Ok(sp) => sp,
        Err(_) => solve_pairwise(scheme, cell, opp, tol.min(1e-10))?,
    };
    Ok((sp.mu_star, sp.opt))
}

/// Log barrier `F(x) = -sum ln(b_i - a_i . x)` of a full-dimensional cell.
struct CellBarrier {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    start: Vec<f64>,
}

impl CellBarrier {
    fn new(cell: &ConvexBody) -> Result<Self> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (row, b) in cell.inequalities() {
            rows.push(row);
            rhs.push(b);
        }
        let (start, _) = cell.chebyshev_center()?;
        Ok(CellBarrier { rows, rhs, start })
    }

    fn theta(&self) -> f64 {
        self.rows.len() as f64
    }

    fn min_slack(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| b - dot(a, x))
            .fold(f64::INFINITY, f64::min)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for (a, b) in self.rows.iter().zip(&self.rhs) {
            let s = b - dot(a, x);
            if s <= 0.0 {
                return f64::INFINITY;
            }
            f -= s.ln();
        }
        f
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut g = vec![0.0; n];
        for (a, b) in self.rows.iter().zip(&self.rhs) {
            let s = b - dot(a, x);
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += ai / s;
            }
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        let n = x.len();
        let mut h = Mat::zeros(n, n);
        for (a, b) in self.rows.iter().zip(&self.rhs) {
            let s = b - dot(a, x);
            let w = 1.0 / (s * s);
            for i in 0..n {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    h.add_to(i, j, w * a[i] * a[j]);
                }
            }
        }
        h
    }

    /// Damped Newton minimization of the plain barrier (the analytic center).
    fn analytic_center(&self) -> Result<Vec<f64>> {
        let mut x = self.start.clone();
        if self.min_slack(&x) <= 0.0 {
            return Err(Error::SolverFailure {
                context: "analytic_center",
                reason: "interior start point unavailable".into(),
            });
        }
        for _ in 0..CENTER_MAX_ITERS {
            let g = self.gradient(&x);
            let h = self.hessian(&x);
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let d = h.solve(&neg_g)?;
            let dec_sq = -dot(&g, &d);
            if dec_sq <= 1e-20 {
                return Ok(x);
            }
            let lambda = dec_sq.max(0.0).sqrt();
            let mut t = if lambda <= 0.25 { 1.0 } else { 1.0 / (1.0 + lambda) };
            let f0 = self.value(&x);
            let mut stepped = false;
            for _ in 0..60 {
                let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
                if self.min_slack(&cand) > 0.0 && self.value(&cand) < f0 {
                    x = cand;
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if !stepped {
                return Ok(x);
            }
        }
        Err(Error::SolverFailure {
            context: "analytic_center",
            reason: "Newton did not converge".into(),
        })
    }
}

/// Damped Newton on `F(x) - tau ln(psi(x) + r)` from a strictly feasible start.
fn newton_on_augmented(
    barrier: &CellBarrier,
    ev: &RateEvaluator,
    r: f64,
    tau: f64,
    mut x: Vec<f64>,
) -> Result<Vec<f64>> {
    let n = x.len();
    let objective = |x: &[f64]| -> Result<f64> {
        let (psi, _) = ev.value_grad(x)?;
        let m = psi + r;
        if m <= 0.0 || barrier.min_slack(x) <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(barrier.value(x) - tau * m.ln())
    };
    for _ in 0..CONTINUATION_MAX_ITERS {
        let (psi, gpsi) = ev.value_grad(&x)?;
        let margin = psi + r;
        let gf = barrier.gradient(&x);
        let g: Vec<f64> = gf
            .iter()
            .zip(&gpsi)
            .map(|(a, b)| a - tau * b / margin)
            .collect();
        let mut h = barrier.hessian(&x);
        let w = tau / (margin * margin);
        for i in 0..n {
            for j in 0..n {
                h.add_to(i, j, w * gpsi[i] * gpsi[j]);
            }
        }
        if let Some(curv) = ev.curvature_diag(&x) {
            // psi is concave: -curv >= 0 keeps the Hessian positive definite.
            for (i, c) in curv.iter().enumerate() {
                h.add_to(i, i, -tau * c / margin);
            }
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let d = h.solve(&neg_g)?;
        let dec_sq = -dot(&g, &d);
        if dec_sq <= 1e-22 {
            return Ok(x);
        }
        let lambda = dec_sq.max(0.0).sqrt();
        let mut t = if lambda <= 0.25 { 1.0 } else { 1.0 / (1.0 + lambda) };
        let f0 = objective(&x)?;
        let mut stepped = false;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            if objective(&cand)? <= f0 - 1e-4 * t * dec_sq {
                x = cand;
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if !stepped {
            return Ok(x);
        }
    }
    Ok(x)
}

/// Newton iterations on the stationarity system of `min F(x)` subject to
/// `psi(x) = -r`: drives `grad F - lambda grad psi` and `psi + r` to zero
/// while keeping the iterate strictly inside the cell and `lambda > 0`.
fn kkt_polish(
    barrier: &CellBarrier,
    ev: &RateEvaluator,
    r: f64,
    start: Vec<f64>,
    lambda: &mut f64,
) -> Result<Vec<f64>> {
    let n = start.len();
    let mut x = start;
    let residual = |x: &[f64], lam: f64| -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let (psi, gpsi) = ev.value_grad(x)?;
        let gf = barrier.gradient(x);
        let rx: Vec<f64> = gf
            .iter()
            .zip(&gpsi)
            .map(|(a, b)| a - lam * b)
            .collect();
        Ok((rx, psi + r, gpsi))
    };
    let norm_of = |rx: &[f64], rc: f64| -> f64 { (dot(rx, rx) + rc * rc).sqrt() };

    let (mut rx, mut rc, mut gpsi) = residual(&x, *lambda)?;
    let mut best = norm_of(&rx, rc);
    for _ in 0..POLISH_MAX_ITERS {
        if best <= 1e-13 * (1.0 + norm2(&barrier.gradient(&x))) {
            break;
        }
        // Assemble the (n+1) x (n+1) system in (dx, dlambda).
        let mut h = barrier.hessian(&x);
        if let Some(curv) = ev.curvature_diag(&x) {
            for (i, c) in curv.iter().enumerate() {
                h.add_to(i, i, -*lambda * c);
            }
        }
        let mut j = Mat::zeros(n + 1, n + 1);
        for a in 0..n {
            for b in 0..n {
                j.set(a, b, h.get(a, b));
            }
            j.set(a, n, -gpsi[a]);
            j.set(n, a, gpsi[a]);
        }
        let mut rhs = vec![0.0; n + 1];
        for a in 0..n {
            rhs[a] = -rx[a];
        }
        rhs[n] = -rc;
        let Ok(step) = j.solve(&rhs) else { break };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&step[..n]).map(|(xi, di)| xi + t * di).collect();
            let cand_l = *lambda + t * step[n];
            if cand_l > 0.0 && barrier.min_slack(&cand) > 0.0 {
                let (nrx, nrc, ngpsi) = residual(&cand, cand_l)?;
                let nn = norm_of(&nrx, nrc);
                if nn < best {
                    x = cand;
                    *lambda = cand_l;
                    rx = nrx;
                    rc = nrc;
                    gpsi = ngpsi;
                    best = nn;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(x)
}
