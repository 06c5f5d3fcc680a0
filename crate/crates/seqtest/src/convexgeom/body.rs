//! Convex parameter-set representations: boxes and bounded H-polytopes.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Mat};

use super::lp::{solve_lp, LpOutcome};

/// Default entrywise lower bound added by [`ConvexBody::simplex_polytope`].
pub const SIMPLEX_MARGIN: f64 = 1e-9;

/// Attempt cap for rejection sampling from a bounding box.
const REJECTION_CAP: usize = 10_000_000;

/// A nonempty compact convex subset of parameter space, either an axis-aligned
/// box (possibly with degenerate faces) or a bounded H-polytope `{x: Ax <= b}`.
///
/// Polytopes are validated at construction: nonempty, bounded (via 2n support
/// LPs, which also produce the bounding box used for sampling proposals).
/// `simplex_restricted` marks bodies constrained to the probability simplex;
/// these are flat (their affine hull is the simplex plane) and are sampled and
/// volume-measured in the first `n-1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Polytope {
        a: Mat,
        b: Vec<f64>,
        simplex_restricted: bool,
        bbox_lower: Vec<f64>,
        bbox_upper: Vec<f64>,
    },
}

impl ConvexBody {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidBody(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidBody("non-finite box bound".into()));
            }
            if l > u {
                return Err(Error::InvalidBody(format!(
                    "box bounds out of order in coordinate {i}: {l} > {u}"
                )));
            }
        }
        Ok(ConvexBody::Box { lower, upper })
    }

    /// Singleton box `{point}`.
    pub fn singleton(point: Vec<f64>) -> Result<Self> {
        ConvexBody::new_box(point.clone(), point)
    }

    /// Bounded H-polytope `{x: Ax <= b}`; verifies nonemptiness and
    /// boundedness, and records the bounding box.
    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        Self::polytope_flagged(a, b, false)
    }

    /// Polytope intersected with the probability simplex: adds `Σx = 1` (two
    /// inequalities) and `x_i >= margin`.
    pub fn simplex_polytope(
        mut a: Vec<Vec<f64>>,
        mut b: Vec<f64>,
        margin: Option<f64>,
    ) -> Result<Self> {
        let margin = margin.unwrap_or(SIMPLEX_MARGIN);
        let n = a.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidBody("simplex polytope needs explicit dimension".into()));
        }
        a.push(vec![1.0; n]);
        b.push(1.0);
        a.push(vec![-1.0; n]);
        b.push(-1.0);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = -1.0;
            a.push(row);
            b.push(-margin);
        }
        Self::polytope_flagged(a, b, true)
    }

    pub(crate) fn polytope_flagged(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        simplex_restricted: bool,
    ) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidBody(format!(
                "polytope has {} rows but {} right-hand sides",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].len();
        if n == 0 {
            return Err(Error::InvalidBody("polytope rows are empty".into()));
        }
        let mut rows = Vec::with_capacity(a.len());
        let mut rhs = Vec::with_capacity(b.len());
        for (row, &bi) in a.iter().zip(&b) {
            if row.len() != n {
                return Err(Error::InvalidBody("ragged polytope rows".into()));
            }
            if row.iter().any(|v| !v.is_finite()) || !bi.is_finite() {
                return Err(Error::InvalidBody("non-finite polytope data".into()));
            }
            if norm2(row) == 0.0 {
                // Vacuous or contradictory row; keep the system clean.
                if bi < 0.0 {
                    return Err(Error::InvalidBody("zero row with negative rhs".into()));
                }
                continue;
            }
            rows.push(row.clone());
            rhs.push(bi);
        }
        if rows.is_empty() {
            return Err(Error::InvalidBody("polytope has no effective constraints".into()));
        }
        let mat = Mat::from_rows(&rows)?;
        // 2n support LPs establish nonemptiness + boundedness and the bbox.
        let mut bbox_lower = vec![0.0; n];
        let mut bbox_upper = vec![0.0; n];
        for i in 0..n {
            let mut dir = vec![0.0; n];
            dir[i] = 1.0;
            bbox_lower[i] = match solve_lp(&dir, &mat, &rhs)? {
                LpOutcome::Optimal { value, .. } => value,
                LpOutcome::Infeasible => {
                    return Err(Error::InvalidBody("polytope is empty".into()))
                }
                LpOutcome::Unbounded => {
                    return Err(Error::InvalidBody("polytope is unbounded".into()))
                }
            };
            dir[i] = -1.0;
            bbox_upper[i] = match solve_lp(&dir, &mat, &rhs)? {
                LpOutcome::Optimal { value, .. } => -value,
                LpOutcome::Infeasible => {
                    return Err(Error::InvalidBody("polytope is empty".into()))
                }
                LpOutcome::Unbounded => {
                    return Err(Error::InvalidBody("polytope is unbounded".into()))
                }
            };
        }
        Ok(ConvexBody::Polytope {
            a: mat,
            b: rhs,
            simplex_restricted,
            bbox_lower,
            bbox_upper,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Box { lower, .. } => lower.len(),
            ConvexBody::Polytope { a, .. } => a.cols(),
        }
    }

    pub fn is_simplex_restricted(&self) -> bool {
        matches!(
            self,
            ConvexBody::Polytope {
                simplex_restricted: true,
                ..
            }
        )
    }

    /// Bounding box (exact for boxes, from construction LPs for polytopes).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ConvexBody::Box { lower, upper } => (lower.clone(), upper.clone()),
            ConvexBody::Polytope {
                bbox_lower,
                bbox_upper,
                ..
            } => (bbox_lower.clone(), bbox_upper.clone()),
        }
    }

    /// The defining inequalities `row . x <= rhs` (2n rows for a box).
    pub fn inequalities(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            ConvexBody::Box { lower, upper } => {
                let n = lower.len();
                let mut out = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let mut row = vec![0.0; n];
                    row[i] = 1.0;
                    out.push((row.clone(), upper[i]));
                    row[i] = -1.0;
                    out.push((row, -lower[i]));
                }
                out
            }
            ConvexBody::Polytope { a, b, .. } => a
                .to_rows()
                .into_iter()
                .zip(b.iter().copied())
                .collect(),
        }
    }

    /// Minimizes `direction . x` over the body; returns an extreme minimizer
    /// (the corner for boxes, a basic LP solution for polytopes).
    pub fn linear_minimize(&self, direction: &[f64]) -> Result<Vec<f64>> {
        if direction.len() != self.dim() || direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputError(
                "linear_minimize: bad direction vector".into(),
            ));
        }
        match self {
            ConvexBody::Box { lower, upper } => Ok(direction
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&d, (&l, &u))| if d > 0.0 { l } else if d < 0.0 { u } else { l })
                .collect()),
            ConvexBody::Polytope { a, b, .. } => match solve_lp(direction, a, b)? {
                LpOutcome::Optimal { x, .. } => Ok(x),
                outcome => Err(Error::InvalidBody(format!(
                    "validated polytope produced LP outcome {outcome:?}"
                ))),
            },
        }
    }

    /// Maximizes `direction . x`; convenience wrapper over `linear_minimize`.
    pub fn linear_maximize(&self, direction: &[f64]) -> Result<Vec<f64>> {
        let neg: Vec<f64> = direction.iter().map(|v| -v).collect();
        self.linear_minimize(&neg)
    }

    /// Membership test with additive tolerance `tol` (per face, scaled by the
    /// face normal's length).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            ConvexBody::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&xi, (&l, &u))| xi >= l - tol && xi <= u + tol),
            ConvexBody::Polytope { a, b, .. } => (0..a.rows()).all(|i| {
                let row = a.row(i);
                dot(row, x) <= b[i] + tol * norm2(row).max(1.0)
            }),
        }
    }

    /// Chebyshev center and radius: the deepest point w.r.t. normalized face
    /// distances. Radius 0 means the body has empty interior (degenerate box
    /// face or equality-carrying polytope such as a simplex restriction).
    pub fn chebyshev_center(&self) -> Result<(Vec<f64>, f64)> {
        match self {
            ConvexBody::Box { lower, upper } => {
                let center: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
                let radius = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| 0.5 * (u - l))
                    .fold(f64::INFINITY, f64::min);
                Ok((center, radius))
            }
            ConvexBody::Polytope { a, b, .. } => {
                let n = a.cols();
                let m = a.rows();
                // max t  s.t.  a_i . x + ||a_i|| t <= b_i   in variables (x, t).
                let mut rows = Vec::with_capacity(m);
                for i in 0..m {
                    let mut row = a.row(i).to_vec();
                    row.push(norm2(a.row(i)));
                    rows.push(row);
                }
                let mat = Mat::from_rows(&rows)?;
                let mut c = vec![0.0; n + 1];
                c[n] = -1.0;
                match solve_lp(&c, &mat, b)? {
                    LpOutcome::Optimal { mut x, .. } => {
                        let r = x.pop().expect("radius variable");
                        Ok((x, r))
                    }
                    outcome => Err(Error::InvalidBody(format!(
                        "chebyshev LP outcome {outcome:?} on validated polytope"
                    ))),
                }
            }
        }
    }

    /// Signed feasibility margin: Chebyshev radius, which is negative when the
    /// inequality system is infeasible. Used to prune empty cells.
    pub fn feasibility_margin(a: &[Vec<f64>], b: &[f64]) -> Result<f64> {
        let n = a.first().map_or(0, Vec::len);
        let m = a.len();
        let mut rows = Vec::with_capacity(m);
        for (row, _) in a.iter().zip(b) {
            let mut r = row.clone();
            r.push(norm2(row).max(1e-300));
            rows.push(r);
        }
        let mat = Mat::from_rows(&rows)?;
        let mut c = vec![0.0; n + 1];
        c[n] = -1.0;
        match solve_lp(&c, &mat, b)? {
            LpOutcome::Optimal { x, .. } => Ok(x[n]),
            LpOutcome::Unbounded => Ok(f64::INFINITY),
            LpOutcome::Infeasible => Err(Error::InvalidBody(
                "feasibility probe LP cannot be infeasible".into(),
            )),
        }
    }

    /// Intersects with the half-space `normal . x <= rhs`. Returns `None` when
    /// the intersection is empty (feasibility margin below `-1e-9`); otherwise
    /// a validated polytope (boxes are converted to their inequality form).
    /// The result keeps all original constraints plus the new row.
    pub fn intersect_halfspace(&self, normal: &[f64], rhs: f64) -> Result<Option<ConvexBody>> {
        if normal.len() != self.dim() || norm2(normal) == 0.0 {
            return Err(Error::InputError("intersect: bad half-space normal".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhss: Vec<f64> = Vec::new();
        for (row, bi) in self.inequalities() {
            rows.push(row);
            rhss.push(bi);
        }
        rows.push(normal.to_vec());
        rhss.push(rhs);
        if ConvexBody::feasibility_margin(&rows, &rhss)? < -1e-9 {
            return Ok(None);
        }
        Ok(Some(ConvexBody::polytope_flagged(
            rows,
            rhss,
            self.is_simplex_restricted(),
        )?))
    }

    /// Uniform sample from the body: direct for boxes, rejection from the
    /// bounding box for polytopes. Simplex-restricted bodies are sampled in
    /// the first `n-1` coordinates with the last determined by `Σx = 1`
    /// (uniform w.r.t. that parameterization's Lebesgue measure).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            ConvexBody::Box { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| if u > l { rng.random_range(l..u) } else { l })
                .collect()),
            ConvexBody::Polytope {
                bbox_lower,
                bbox_upper,
                simplex_restricted,
                ..
            } => {
                let n = self.dim();
                let free = if *simplex_restricted { n - 1 } else { n };
                for _ in 0..REJECTION_CAP {
                    let mut x: Vec<f64> = (0..free)
                        .map(|i| {
                            if bbox_upper[i] > bbox_lower[i] {
                                rng.random_range(bbox_lower[i]..bbox_upper[i])
                            } else {
                                bbox_lower[i]
                            }
                        })
                        .collect();
                    if *simplex_restricted {
                        let s: f64 = x.iter().sum();
                        x.push(1.0 - s);
                    }
                    if self.contains(&x, 1e-12) {
                        return Ok(x);
                    }
                }
                Err(Error::SolverFailure {
                    context: "sample_uniform",
                    reason: "rejection sampling exceeded attempt cap (degenerate body?)".into(),
                })
            }
        }
    }
}

/// An affine cut `l(x) = normal . x + offset`; the retained ("good") side is
/// `l(x) <= 0`, the discarded ("bad") side is `l(x) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Cut {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::InputError("cut with non-finite coefficients".into()));
        }
        if norm2(&normal) + offset.abs() == 0.0 {
            return Err(Error::InputError("cut is identically zero".into()));
        }
        Ok(Cut { normal, offset })
    }

    /// Constant cut `l == -1`: retains everything (bad side empty).
    pub fn keep_all(n: usize) -> Self {
        Cut {
            normal: vec![0.0; n],
            offset: -1.0,
        }
    }

    /// Constant cut `l == +1`: discards everything (good side empty).
    pub fn discard_all(n: usize) -> Self {
        Cut {
            normal: vec![0.0; n],
            offset: 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    /// True when the normal has exactly one nonzero entry (or none: a constant
    /// cut, which is "axis-aligned" vacuously for volume closed forms).
    pub fn is_axis_aligned(&self) -> bool {
        self.normal.iter().filter(|v| **v != 0.0).count() <= 1
    }
}
