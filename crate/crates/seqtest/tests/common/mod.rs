//! Shared helpers for the integration suites: independent numerical oracles
//! (kept free of the library's own solver paths) and the pass/fail reporter.

#![allow(dead_code)]

/// Prints the one-line verdict for an acceptance criterion and panics on
/// failure so the test harness records it.
pub fn criterion(n: u32, passed: bool, details: &str) {
    if passed {
        println!("criterion {n}: PASS - {details}");
    } else {
        println!("criterion {n}: FAIL - {details}");
        panic!("criterion {n} failed: {details}");
    }
}

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi method.
///
/// Independent of the library's power iteration: full-spectrum rotations with
/// the stable tangent formula. Accurate to ~1e-14 relative for the small
/// well-conditioned matrices used in tests.
pub fn jacobi_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), n, "matrix must be square");
        for j in 0..n {
            assert!(
                (row[j] - matrix[j][i]).abs() == 0.0,
                "matrix must be symmetric"
            );
        }
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    1.0 / (theta - (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Closed-form optimum of the Gaussian affinity exponent over a pair of
/// axis-aligned boxes: the problem separates per coordinate, where the
/// optimal pair is the pair of closest interval points.
pub struct BoxPairOracle {
    pub opt: f64,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

pub fn gaussian_box_pair_oracle(
    lower1: &[f64],
    upper1: &[f64],
    lower2: &[f64],
    upper2: &[f64],
) -> BoxPairOracle {
    let n = lower1.len();
    assert!(upper1.len() == n && lower2.len() == n && upper2.len() == n);
    let mut mu = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    let mut sq = 0.0;
    for i in 0..n {
        let (m, v) = if upper1[i] < lower2[i] {
            (upper1[i], lower2[i])
        } else if upper2[i] < lower1[i] {
            (lower1[i], upper2[i])
        } else {
            // Overlapping intervals share a point; any common point is
            // optimal with zero gap.
            let c = lower1[i].max(lower2[i]);
            (c, c)
        };
        sq += (m - v) * (m - v);
        mu.push(m);
        nu.push(v);
    }
    BoxPairOracle {
        opt: -0.125 * sq,
        mu,
        nu,
    }
}
