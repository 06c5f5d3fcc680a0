//! Dense two-phase simplex for tiny linear programs.
//!
//! Solves `min c·x  s.t.  A x <= b` with `x` free (unrestricted in sign). The
//! linear-minimization oracle of the saddle solver, polytope boundedness checks,
//! and cell-feasibility probes all reduce to this form. Problems here have at
//! most a few dozen rows and columns, so a textbook tableau with Bland's
//! anti-cycling rule is both adequate and easy to audit.
//!
//! Free variables are split as `x = u - w` with `u, w >= 0`; the split pair
//! can never be basic simultaneously (their columns are negatives of each
//! other), so solutions are basic in the lifted standard form.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Outcome of a linear program.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// Minimizer and optimal value.
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 100_000;

/// Minimizes `c·x` over `{x : a x <= b}` with free `x`.
pub fn solve_lp(c: &[f64], a: &Mat, b: &[f64]) -> Result<LpOutcome> {
    let n = c.len();
    let m = a.rows();
    if a.cols() != n || b.len() != m {
        return Err(Error::InputError("lp: shape mismatch".into()));
    }

    // Standard form columns: u (n), w (n), slacks (m), artificials (appended).
    // Rows with negative rhs are flipped so rhs >= 0; their slack enters with
    // coefficient -1 and an artificial provides the initial basis instead.
    let slack0 = 2 * n;
    let mut ncols = 2 * n + m;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut artificials: Vec<usize> = Vec::new();

    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; 2 * n + m + 1];
        for j in 0..n {
            row[j] = flip * a.get(i, j);
            row[n + j] = -flip * a.get(i, j);
        }
        row[slack0 + i] = flip;
        *row.last_mut().unwrap() = flip * b[i];
        tab.push(row);
        basis.push(slack0 + i); // placeholder; fixed below for flipped rows
    }
    // Append artificial columns for flipped rows (slack coefficient -1 there).
    for i in 0..m {
        if tab[i][slack0 + i] < 0.0 {
            for row in tab.iter_mut() {
                let rhs = row.pop().unwrap();
                row.push(0.0);
                row.push(rhs);
            }
            tab[i][ncols] = 1.0;
            basis[i] = ncols;
            artificials.push(ncols);
            ncols += 1;
        }
    }

    if !artificials.is_empty() {
        // Phase 1: minimize the sum of artificials.
        let mut cost = vec![0.0; ncols + 1];
        for &j in &artificials {
            cost[j] = 1.0;
        }
        canonicalize_cost(&mut cost, &tab, &basis);
        tab.push(cost);
        if !pivot_to_optimum(&mut tab, &mut basis, ncols, &|_| true)? {
            return Err(Error::SolverFailure {
                context: "lp phase 1",
                reason: "unbounded artificial objective".into(),
            });
        }
        let phase1 = -tab.last().unwrap()[ncols];
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if phase1 > 1e-8 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        tab.pop();
        purge_artificials(&mut tab, &mut basis, &artificials, ncols);
    }

    // Phase 2: the true objective over u - w; artificial columns are barred.
    let is_artificial = {
        let set: Vec<usize> = artificials.clone();
        move |j: usize| set.contains(&j)
    };
    let mut cost = vec![0.0; ncols + 1];
    for j in 0..n {
        cost[j] = c[j];
        cost[n + j] = -c[j];
    }
    canonicalize_cost(&mut cost, &tab, &basis);
    tab.push(cost);
    let allowed = |j: usize| !is_artificial(j);
    if !pivot_to_optimum(&mut tab, &mut basis, ncols, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut z = vec![0.0; ncols];
    let nrows = tab.len() - 1;
    for i in 0..nrows {
        z[basis[i]] = tab[i][ncols];
    }
    let x: Vec<f64> = (0..n).map(|j| z[j] - z[n + j]).collect();
    let value = -tab.last().unwrap()[ncols];
    Ok(LpOutcome::Optimal { x, value })
}

/// Zeroes the cost coefficients of basic columns (row reduction of the cost row).
fn canonicalize_cost(cost: &mut [f64], tab: &[Vec<f64>], basis: &[usize]) {
    for (i, &bj) in basis.iter().enumerate() {
        let f = cost[bj];
        if f != 0.0 {
            for (cj, tj) in cost.iter_mut().zip(&tab[i]) {
                *cj -= f * tj;
            }
        }
    }
}

/// Runs simplex pivots until optimality; returns false on unboundedness.
fn pivot_to_optimum(
    tab: &mut Vec<Vec<f64>>,
    basis: &mut [usize],
    ncols: usize,
    allowed: &dyn Fn(usize) -> bool,
) -> Result<bool> {
    let nrows = tab.len() - 1;
    for _ in 0..MAX_PIVOTS {
        // Bland: entering column = lowest index with negative reduced cost.
        let cost = tab.last().unwrap();
        let enter = (0..ncols).find(|&j| allowed(j) && cost[j] < -COST_TOL);
        let Some(enter) = enter else {
            return Ok(true);
        };
        // Ratio test; Bland ties broken by lowest basis column index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..nrows {
            let aij = tab[i][enter];
            if aij > PIVOT_TOL {
                let ratio = tab[i][ncols] / aij;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12 || (ratio < lr + 1e-12 && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((leave, _)) = leave else {
            return Ok(false);
        };
        pivot(tab, leave, enter, ncols);
        basis[leave] = enter;
    }
    Err(Error::SolverFailure {
        context: "lp",
        reason: "pivot limit exceeded".into(),
    })
}

fn pivot(tab: &mut [Vec<f64>], prow: usize, pcol: usize, ncols: usize) {
    let d = tab[prow][pcol];
    for v in tab[prow].iter_mut() {
        *v /= d;
    }
    for i in 0..tab.len() {
        if i == prow {
            continue;
        }
        let f = tab[i][pcol];
        if f == 0.0 {
            continue;
        }
        for j in 0..=ncols {
            let p = tab[prow][j];
            if p != 0.0 {
                tab[i][j] -= f * p;
            }
        }
    }
}

/// Pivots basic artificials (at level zero after a feasible phase 1) out of the
/// basis, deleting rows that are redundant in the original columns.
fn purge_artificials(
    tab: &mut Vec<Vec<f64>>,
    basis: &mut Vec<usize>,
    artificials: &[usize],
    ncols: usize,
) {
    let mut i = 0;
    while i < tab.len() {
        if artificials.contains(&basis[i]) {
            let pivot_col = (0..ncols)
                .find(|&j| !artificials.contains(&j) && tab[i][j].abs() > PIVOT_TOL);
            match pivot_col {
                Some(j) => {
                    pivot(tab, i, j, ncols);
                    basis[i] = j;
                    i += 1;
                }
                None => {
                    // Row is zero in all real columns: redundant constraint.
                    tab.remove(i);
                    basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Unit square as Ax <= b.
    fn square() -> (Mat, Vec<f64>) {
        (
            mat(&[
                &[1.0, 0.0],
                &[0.0, 1.0],
                &[-1.0, 0.0],
                &[0.0, -1.0],
            ]),
            vec![1.0, 1.0, 0.0, 0.0],
        )
    }

    #[test]
    fn minimizes_to_square_corner() {
        let (a, b) = square();
        match solve_lp(&[1.0, -1.0], &a, &b).unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 0.0).abs() < 1e-9);
                assert!((x[1] - 1.0).abs() < 1e-9);
                assert!((value + 1.0).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn handles_negative_rhs_via_phase_one() {
        // 2 <= x <= 3, minimize x.
        let a = mat(&[&[-1.0], &[1.0]]);
        let b = vec![-2.0, 3.0];
        match solve_lp(&[1.0], &a, &b).unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-9);
                assert!((value - 2.0).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 1 and x <= 0.
        let a = mat(&[&[-1.0], &[1.0]]);
        let b = vec![-1.0, 0.0];
        assert_eq!(solve_lp(&[1.0], &a, &b).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let a = mat(&[&[1.0]]);
        let b = vec![1.0];
        assert_eq!(solve_lp(&[1.0], &a, &b).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn zero_objective_returns_feasible_point() {
        let (a, b) = square();
        match solve_lp(&[0.0, 0.0], &a, &b).unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!(x.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
                assert!(value.abs() < 1e-12);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn redundant_equality_pair_is_handled() {
        // x1 + x2 = 1 (two inequalities), x >= 0.3 each, minimize x1.
        let a = mat(&[
            &[1.0, 1.0],
            &[-1.0, -1.0],
            &[-1.0, 0.0],
            &[0.0, -1.0],
        ]);
        let b = vec![1.0, -1.0, -0.3, -0.3];
        match solve_lp(&[1.0, 0.0], &a, &b).unwrap() {
            LpOutcome::Optimal { x, .. } => {
                assert!((x[0] - 0.3).abs() < 1e-9);
                assert!((x[1] - 0.7).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn triangle_chebyshev_form() {
        // max t s.t. x + t*sqrt(2)/... encoded directly: the inradius of the
        // right triangle {x>=0, y>=0, x+y<=1} is 1 - sqrt(2)/2 ~ 0.29289.
        let s = 2.0f64.sqrt();
        let a = mat(&[
            &[-1.0, 0.0, 1.0],
            &[0.0, -1.0, 1.0],
            &[1.0, 1.0, s],
        ]);
        let b = vec![0.0, 0.0, 1.0];
        match solve_lp(&[0.0, 0.0, -1.0], &a, &b).unwrap() {
            LpOutcome::Optimal { x, .. } => {
                assert!((x[2] - (1.0 - s / 2.0)).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }
}
