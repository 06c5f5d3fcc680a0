//! Aggregation of pairwise detectors into a multi-hypothesis test: closeness
//! structure, spectral risk of the detector matrix, Perron-optimal shifts,
//! and the accept rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pairwise::Detector;
use crate::schemes::{Observation, SampleSummary};

/// Relative eigen-residual threshold for power iteration: controls the
/// eigenvector itself, not just the Rayleigh quotient, because the shift
/// construction divides by eigenvector entries.
const RESIDUAL_TOL: f64 = 1e-14;
const POWER_MAX_ITERS: usize = 200_000;

/// Symmetric zero-diagonal 0/1 matrix marking which hypothesis pairs are
/// "close" (entry 0) versus requiring separation (entry 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessMatrix {
    n: usize,
    data: Vec<bool>,
}

impl ClosenessMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InputError("closeness matrix must be square".into()));
        }
        let mut data = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                match rows[i][j] {
                    0 => {}
                    1 => data[i * n + j] = true,
                    v => {
                        return Err(Error::InputError(format!(
                            "closeness entries must be 0 or 1, got {v}"
                        )))
                    }
                }
            }
        }
        for i in 0..n {
            if data[i * n + i] {
                return Err(Error::InputError("closeness diagonal must be zero".into()));
            }
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::InputError("closeness matrix must be symmetric".into()));
                }
            }
        }
        Ok(ClosenessMatrix { n, data })
    }

    /// All pairs separated: ones everywhere off the diagonal.
    pub fn complete(n: usize) -> Self {
        let mut data = vec![true; n * n];
        for i in 0..n {
            data[i * n + i] = false;
        }
        ClosenessMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn separated(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    /// Copy with pair `(i, j)` marked close (entry zeroed both ways).
    pub fn with_pair_close(&self, i: usize, j: usize) -> Self {
        let mut c = self.clone();
        c.data[i * self.n + j] = false;
        c.data[j * self.n + i] = false;
        c
    }
}

/// Symmetric matrix of pairwise risk bounds in `(0, 1]` with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RiskMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InputError("risk matrix must be square".into()));
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = rows[i][j];
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::InputError(format!(
                        "risks must lie in (0,1], got {v} at ({i},{j})"
                    )));
                }
                data[i * n + j] = v;
            }
        }
        for i in 0..n {
            if data[i * n + i] != 1.0 {
                return Err(Error::InputError("risk diagonal must be 1".into()));
            }
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::InputError("risk matrix must be symmetric".into()));
                }
            }
        }
        Ok(RiskMatrix { n, data })
    }

    /// Builds from one value per unordered pair, mirrored exactly.
    pub fn from_pair_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut rows = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        RiskMatrix::new(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Skew-symmetric matrix of detector shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ShiftMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InputError("shift matrix must be square".into()));
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if !rows[i][j].is_finite() {
                    return Err(Error::InputError("shifts must be finite".into()));
                }
                data[i * n + j] = rows[i][j];
            }
        }
        for i in 0..n {
            for j in 0..=i {
                if (data[i * n + j] + data[j * n + i]).abs() > 1e-12 {
                    return Err(Error::InputError(
                        "shift matrix must be skew-symmetric".into(),
                    ));
                }
            }
        }
        Ok(ShiftMatrix { n, data })
    }

    pub fn zero(n: usize) -> Self {
        ShiftMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Shifts induced by positive weights: `alpha_ij = ln(g_j / g_i)`,
    /// stored exactly skew-symmetric (lower triangle is the negated upper).
    /// Rescaling all weights by a common representable factor (e.g. a power
    /// of two) leaves the result bit-identical.
    pub fn from_weights(g: &[f64]) -> Result<Self> {
        if g.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InputError("weights must be positive finite".into()));
        }
        let n = g.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let a = (g[j] / g[i]).ln();
                data[i * n + j] = a;
                data[j * n + i] = -a;
            }
        }
        Ok(ShiftMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

fn check_same_n(eps: &RiskMatrix, c: &ClosenessMatrix) -> Result<usize> {
    if eps.n() != c.n() {
        return Err(Error::InputError(format!(
            "risk matrix is {}x{0} but closeness is {1}x{1}",
            eps.n(),
            c.n()
        )));
    }
    Ok(eps.n())
}

/// Entrywise `eps_ij^k * c_ij` as a dense row-major square matrix.
fn powered_matrix(eps: &RiskMatrix, c: &ClosenessMatrix, k: u64) -> Result<Vec<f64>> {
    let n = check_same_n(eps, c)?;
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "repetition count must be >= 1".into(),
        });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if c.separated(i, j) {
                d[i * n + j] = eps.get(i, j).powi(k.min(i32::MAX as u64) as i32);
            }
        }
    }
    Ok(d)
}

/// Dominant (largest) eigenvalue and a nonnegative eigenvector of a symmetric
/// entrywise-nonnegative matrix, by power iteration on the diagonally shifted
/// matrix (shift = max row sum, making the spectrum nonnegative).
fn dominant_eigenpair(d: &[f64], n: usize) -> (f64, Vec<f64>) {
    let sigma = (0..n)
        .map(|i| (0..n).map(|j| d[i * n + j]).sum::<f64>())
        .fold(0.0f64, f64::max);
    if sigma == 0.0 {
        return (0.0, vec![(n as f64).sqrt().recip(); n.max(1)]);
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = sigma * v[i];
                for j in 0..n {
                    s += d[i * n + j] * v[j];
                }
                s
            })
            .collect()
    };
    let mut v = vec![(n as f64).sqrt().recip(); n];
    let mut rayleigh = 0.0;
    let mut restarted = false;
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-300 {
            // Degenerate iterate: restart from a fixed pseudo-random vector.
            if restarted {
                return (0.0, v);
            }
            restarted = true;
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
            v = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= nv);
            continue;
        }
        rayleigh = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let residual = v
            .iter()
            .zip(&w)
            .map(|(vi, wi)| {
                let r = wi - rayleigh * vi;
                r * r
            })
            .sum::<f64>()
            .sqrt();
        v = w.iter().map(|x| x / norm).collect();
        if residual <= RESIDUAL_TOL * rayleigh.abs().max(1e-300) {
            break;
        }
    }
    ((rayleigh - sigma).max(0.0), v)
}

/// Spectral norm of the matrix `[eps_ij^k * c_ij]`: the tightest uniform risk
/// any shift assignment can certify for the aggregated test on `k`
/// observations.
pub fn risk_matrix_norm(eps: &RiskMatrix, c: &ClosenessMatrix, k: u64) -> Result<f64> {
    let n = check_same_n(eps, c)?;
    let d = powered_matrix(eps, c, k)?;
    // Symmetric nonnegative: the spectral norm equals the dominant eigenvalue.
    Ok(dominant_eigenpair(&d, n).0)
}

/// Shifts from the Perron-Frobenius weights of the risk matrix, with the
/// zero-pattern perturbed by `eta` (default `1e-9 * (max entry + 1)`) so the
/// weights are strictly positive. Returns the shifts and the achieved
/// worst-row risk, which is at most `risk_matrix_norm + n * eta`.
pub fn optimal_shifts(
    eps: &RiskMatrix,
    c: &ClosenessMatrix,
    k: u64,
    eta: Option<f64>,
) -> Result<(ShiftMatrix, f64)> {
    let n = check_same_n(eps, c)?;
    let mut d = powered_matrix(eps, c, k)?;
    let max_entry = d.iter().fold(0.0f64, |m, &v| m.max(v));
    let eta = match eta {
        Some(e) if e > 0.0 => e,
        Some(e) => {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("perturbation must be positive, got {e}"),
            })
        }
        None => 1e-9 * (max_entry + 1.0),
    };
    for i in 0..n {
        for j in 0..n {
            if i != j && d[i * n + j] == 0.0 {
                d[i * n + j] = eta;
            }
        }
    }
    let (_, g) = dominant_eigenpair(&d, n);
    let floor = 1e-300;
    let g: Vec<f64> = g.iter().map(|&v| v.max(floor)).collect();
    let alpha = ShiftMatrix::from_weights(&g)?;
    let achieved = shift_risk(eps, c, k, &alpha)?;
    Ok((alpha, achieved))
}

/// Worst-row shifted risk `max_i sum_{j: c_ij=1} eps_ij^k e^{alpha_ij}`.
pub fn shift_risk(
    eps: &RiskMatrix,
    c: &ClosenessMatrix,
    k: u64,
    alpha: &ShiftMatrix,
) -> Result<f64> {
    let n = check_same_n(eps, c)?;
    if alpha.n() != n {
        return Err(Error::InputError(
            "shift matrix size differs from risk matrix".into(),
        ));
    }
    let d = powered_matrix(eps, c, k)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        let row: f64 = (0..n)
            .map(|j| d[i * n + j] * alpha.get(i, j).exp())
            .sum();
        worst = worst.max(row);
    }
    Ok(worst)
}

/// The pairwise detectors feeding the aggregated test: one unshifted detector
/// per separated pair `(i, j)` with `i < j` (the reverse direction is its
/// exact negation), a shift matrix applied once per aggregated sum, and the
/// observation count the table is calibrated for.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTable {
    n: usize,
    reps: usize,
    shifts: ShiftMatrix,
    dets: Vec<Option<Detector>>,
}

impl DetectorTable {
    pub fn new(n: usize, reps: usize, shifts: ShiftMatrix) -> Result<Self> {
        if shifts.n() != n {
            return Err(Error::InputError(
                "shift matrix size differs from table size".into(),
            ));
        }
        if reps == 0 {
            return Err(Error::InvalidParameter {
                name: "reps",
                reason: "observation count must be >= 1".into(),
            });
        }
        Ok(DetectorTable {
            n,
            reps,
            shifts,
            dets: vec![None; n * n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn shifts(&self) -> &ShiftMatrix {
        &self.shifts
    }

    /// Installs the detector voting for `i` against `j` (requires `i < j`).
    pub fn set_pair(&mut self, i: usize, j: usize, d: Detector) -> Result<()> {
        if i >= j || j >= self.n {
            return Err(Error::InputError(format!(
                "pair ({i},{j}) out of range or misordered"
            )));
        }
        self.dets[i * self.n + j] = Some(d);
        Ok(())
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&Detector> {
        if i < j {
            self.dets[i * self.n + j].as_ref()
        } else {
            self.dets[j * self.n + i].as_ref()
        }
    }

    /// Aggregated shifted statistic for `i` against `j` from a summary of
    /// exactly `reps` observations: `sum_t phi_ij(omega_t) - alpha_ij`,
    /// antisymmetric in `(i, j)` by construction.
    pub fn margin_summed(&self, i: usize, j: usize, summary: &SampleSummary) -> Result<f64> {
        if summary.count != self.reps {
            return Err(Error::InputError(format!(
                "summary holds {} observations, table expects {}",
                summary.count, self.reps
            )));
        }
        let Some(det) = self.pair(i, j) else {
            return Err(Error::InputError(format!(
                "no detector installed for pair ({i},{j})"
            )));
        };
        let raw = det.eval_summed(summary);
        let oriented = if i < j { raw } else { -raw };
        Ok(oriented - self.shifts.get(i, j))
    }
}

/// Indices `i` accepted by the aggregated test: all shifted statistics
/// against separated alternatives are strictly positive. May be empty or
/// contain several indices.
pub fn aggregate_accept(
    table: &DetectorTable,
    c: &ClosenessMatrix,
    sample: &[Observation],
) -> Result<Vec<usize>> {
    if sample.len() != table.reps() {
        return Err(Error::InputError(format!(
            "sample holds {} observations, table expects {}",
            sample.len(),
            table.reps()
        )));
    }
    let n = table.n();
    if c.n() != n {
        return Err(Error::InputError(
            "closeness size differs from table size".into(),
        ));
    }
    // Aggregate each installed pair once; reuse with flipped sign for (j, i).
    let mut sums = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if c.separated(i, j) {
                let Some(det) = table.pair(i, j) else {
                    return Err(Error::InputError(format!(
                        "no detector installed for separated pair ({i},{j})"
                    )));
                };
                sums[i * n + j] = sample.iter().map(|o| det.eval(o)).sum();
            }
        }
    }
    let mut accepted = Vec::new();
    'outer: for i in 0..n {
        for j in 0..n {
            if !c.separated(i, j) {
                continue;
            }
            let raw = if i < j {
                sums[i * n + j]
            } else {
                -sums[j * n + i]
            };
            if raw - table.shifts().get(i, j) <= 0.0 {
                continue 'outer;
            }
        }
        accepted.push(i);
    }
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexgeom::{solve_pairwise, ConvexBody};
    use crate::pairwise::build_detector;
    use crate::schemes::{Scheme, SchemeKind};

    fn uniform_risks(n: usize, off: f64) -> RiskMatrix {
        RiskMatrix::from_pair_fn(n, |_, _| off).unwrap()
    }

    #[test]
    fn matrix_constructors_enforce_invariants() {
        assert!(ClosenessMatrix::new(vec![vec![0, 1], vec![0, 0]]).is_err()); // asymmetric
        assert!(ClosenessMatrix::new(vec![vec![1, 1], vec![1, 0]]).is_err()); // diagonal
        assert!(RiskMatrix::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(RiskMatrix::new(vec![vec![0.9, 0.5], vec![0.5, 1.0]]).is_err());
        assert!(RiskMatrix::new(vec![vec![1.0, 1.5], vec![1.5, 1.0]]).is_err());
        assert!(ShiftMatrix::new(vec![vec![0.0, 0.3], vec![-0.2, 0.0]]).is_err());
        assert!(ShiftMatrix::new(vec![vec![0.0, 0.3], vec![-0.3, 0.0]]).is_ok());
    }

    #[test]
    fn two_by_two_norms() {
        let eps = uniform_risks(2, 0.5);
        let c = ClosenessMatrix::complete(2);
        assert!((risk_matrix_norm(&eps, &c, 1).unwrap() - 0.5).abs() < 1e-13);
        assert!((risk_matrix_norm(&eps, &c, 3).unwrap() - 0.125).abs() < 1e-13);
    }

    #[test]
    fn three_by_three_uniform_norm() {
        let eps = uniform_risks(3, 0.3);
        let c = ClosenessMatrix::complete(3);
        assert!((risk_matrix_norm(&eps, &c, 1).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_norm_is_zero() {
        let eps = uniform_risks(3, 0.3);
        // No separated pairs at all.
        let c = ClosenessMatrix::new(vec![vec![0, 0, 0]; 3]).unwrap();
        assert_eq!(risk_matrix_norm(&eps, &c, 1).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_two_case_has_zero_shifts() {
        let eps = uniform_risks(2, 0.4);
        let c = ClosenessMatrix::complete(2);
        let (alpha, achieved) = optimal_shifts(&eps, &c, 2, None).unwrap();
        assert_eq!(alpha.get(0, 1), 0.0);
        assert!((achieved - 0.16).abs() < 1e-12);
    }

    /// Independent oracle: largest root of the characteristic cubic of a
    /// symmetric 3x3 hollow matrix [[0,a,b],[a,0,c],[b,c,0]], whose
    /// polynomial is `lambda^3 - (a^2+b^2+c^2) lambda - 2abc = 0`, via the
    /// trigonometric solution of the depressed cubic.
    fn cubic_top_eigen(a: f64, b: f64, c: f64) -> f64 {
        let p = a * a + b * b + c * c;
        let q = 2.0 * a * b * c;
        let m = 2.0 * (p / 3.0).sqrt();
        let phi = ((3.0 * q) / (p * m)).acos();
        m * (phi / 3.0).cos()
    }

    #[test]
    fn perron_shifts_match_cubic_oracle() {
        let eps = RiskMatrix::new(vec![
            vec![1.0, 0.2, 0.1],
            vec![0.2, 1.0, 0.2],
            vec![0.1, 0.2, 1.0],
        ])
        .unwrap();
        let c = ClosenessMatrix::complete(3);
        let norm = risk_matrix_norm(&eps, &c, 1).unwrap();
        let oracle = cubic_top_eigen(0.2, 0.1, 0.2);
        assert!((norm - oracle).abs() < 1e-12, "{norm} vs {oracle}");
        let (_, achieved) = optimal_shifts(&eps, &c, 1, Some(1e-9)).unwrap();
        assert!((achieved - norm).abs() < 1e-6);
        assert!(achieved <= norm + 3.0 * 1e-9);
    }

    #[test]
    fn shift_risk_closed_cases() {
        let eps = uniform_risks(2, 0.5);
        let c = ClosenessMatrix::complete(2);
        let zero = ShiftMatrix::zero(2);
        assert!((shift_risk(&eps, &c, 1, &zero).unwrap() - 0.5).abs() < 1e-15);
        let a = 0.7;
        let alpha = ShiftMatrix::new(vec![vec![0.0, a], vec![-a, 0.0]]).unwrap();
        let expect = 0.5 * a.exp();
        assert!((shift_risk(&eps, &c, 1, &alpha).unwrap() - expect).abs() < 1e-15);
        // Optimal shifts never do worse than zero shifts.
        let eps3 = RiskMatrix::new(vec![
            vec![1.0, 0.2, 0.1],
            vec![0.2, 1.0, 0.2],
            vec![0.1, 0.2, 1.0],
        ])
        .unwrap();
        let c3 = ClosenessMatrix::complete(3);
        let (_, achieved) = optimal_shifts(&eps3, &c3, 1, None).unwrap();
        assert!(achieved <= shift_risk(&eps3, &c3, 1, &ShiftMatrix::zero(3)).unwrap());
    }

    #[test]
    fn perturbation_slack_shrinks_with_eta() {
        let eps = RiskMatrix::new(vec![
            vec![1.0, 0.3, 0.05],
            vec![0.3, 1.0, 0.4],
            vec![0.05, 0.4, 1.0],
        ])
        .unwrap();
        // One pair close: a zero appears in the matrix, forcing perturbation.
        let c = ClosenessMatrix::complete(3).with_pair_close(0, 2);
        let norm = risk_matrix_norm(&eps, &c, 1).unwrap();
        let mut last = f64::INFINITY;
        for eta in [1e-4, 1e-6, 1e-8] {
            let (_, achieved) = optimal_shifts(&eps, &c, 1, Some(eta)).unwrap();
            assert!(achieved <= norm + 3.0 * eta, "eta={eta}");
            let slack = (achieved - norm).max(0.0);
            assert!(slack <= last + 1e-15, "eta={eta}");
            last = slack;
        }
    }

    #[test]
    fn weight_scaling_leaves_shifts_unchanged() {
        let g = vec![0.8, 0.11, 3.4, 0.27];
        let base = ShiftMatrix::from_weights(&g).unwrap();
        for scale in [0.25, 2.0, 1024.0, 2f64.powi(-17)] {
            let scaled: Vec<f64> = g.iter().map(|v| v * scale).collect();
            let other = ShiftMatrix::from_weights(&scaled).unwrap();
            assert_eq!(base, other, "scale {scale}");
        }
    }

    fn gaussian_two_hypothesis_table(shift: f64) -> (DetectorTable, ClosenessMatrix, Scheme) {
        let scheme = Scheme::new(SchemeKind::Gaussian, 1).unwrap();
        let x1 = ConvexBody::singleton(vec![1.0]).unwrap();
        let x2 = ConvexBody::singleton(vec![-1.0]).unwrap();
        let sp = solve_pairwise(&scheme, &x1, &x2, 1e-10).unwrap();
        let det = build_detector(&sp, &scheme).unwrap();
        let alpha =
            ShiftMatrix::new(vec![vec![0.0, shift], vec![-shift, 0.0]]).unwrap();
        let mut table = DetectorTable::new(2, 1, alpha).unwrap();
        table.set_pair(0, 1, det).unwrap();
        (table, ClosenessMatrix::complete(2), scheme)
    }

    #[test]
    fn accept_rule_signs_and_boundary() {
        let (table, c, _) = gaussian_two_hypothesis_table(0.0);
        // phi(omega) = omega for this symmetric pair; omega = +3 accepts 0.
        let acc = aggregate_accept(&table, &c, &[Observation::Real(vec![3.0])]).unwrap();
        assert_eq!(acc, vec![0]);
        // Exactly zero statistic: strict rule accepts nobody.
        let acc = aggregate_accept(&table, &c, &[Observation::Real(vec![0.0])]).unwrap();
        assert!(acc.is_empty());
        let acc = aggregate_accept(&table, &c, &[Observation::Real(vec![-0.4])]).unwrap();
        assert_eq!(acc, vec![1]);
        // Wrong sample size errors.
        assert!(aggregate_accept(&table, &c, &[]).is_err());
    }

    #[test]
    fn three_hypothesis_rule_enumeration() {
        let scheme = Scheme::new(SchemeKind::Gaussian, 1).unwrap();
        let pts = [2.0, 0.0, -2.0];
        let bodies: Vec<ConvexBody> = pts
            .iter()
            .map(|&p| ConvexBody::singleton(vec![p]).unwrap())
            .collect();
        // Pairs (0,1) and (0,2) separated, (1,2) close.
        let c = ClosenessMatrix::new(vec![vec![0, 1, 1], vec![1, 0, 0], vec![1, 0, 0]])
            .unwrap();
        let mut table = DetectorTable::new(3, 1, ShiftMatrix::zero(3)).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                if c.separated(i, j) {
                    let sp = solve_pairwise(&scheme, &bodies[i], &bodies[j], 1e-10).unwrap();
                    table.set_pair(i, j, build_detector(&sp, &scheme).unwrap()).unwrap();
                }
            }
        }
        // Observation near hypothesis 0: statistics for 0 positive.
        let acc = aggregate_accept(&table, &c, &[Observation::Real(vec![1.9])]).unwrap();
        assert_eq!(acc, vec![0]);
        // Observation at -1.5: row 0 fails, row 1's only constraint is vs 0
        // (statistic -phi_01 > 0 there), row 2's likewise.
        let acc = aggregate_accept(&table, &c, &[Observation::Real(vec![-1.5])]).unwrap();
        assert_eq!(acc, vec![1, 2]);
    }

    #[test]
    fn closing_a_pair_never_shrinks_acceptance() {
        let scheme = Scheme::new(SchemeKind::Gaussian, 1).unwrap();
        let pts = [1.5, 0.0, -1.5];
        let bodies: Vec<ConvexBody> = pts
            .iter()
            .map(|&p| ConvexBody::singleton(vec![p]).unwrap())
            .collect();
        let c_full = ClosenessMatrix::complete(3);
        let mut table = DetectorTable::new(3, 1, ShiftMatrix::zero(3)).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let sp = solve_pairwise(&scheme, &bodies[i], &bodies[j], 1e-10).unwrap();
                table.set_pair(i, j, build_detector(&sp, &scheme).unwrap()).unwrap();
            }
        }
        for omega in [-2.0, -0.7, 0.0, 0.3, 1.1, 2.4] {
            let sample = [Observation::Real(vec![omega])];
            let full = aggregate_accept(&table, &c_full, &sample).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let relaxed = aggregate_accept(
                    &table,
                    &c_full.with_pair_close(i, j),
                    &sample,
                )
                .unwrap();
                for idx in &full {
                    assert!(relaxed.contains(idx), "omega={omega} pair=({i},{j})");
                }
            }
        }
    }

    #[test]
    fn empirical_risk_of_aggregated_test() {
        use rand::SeedableRng;
        // Three Gaussian hypotheses at -2, 0, +2 with k = 4 observations,
        // complete closeness, optimal (zero) shifts by symmetry.
        let scheme = Scheme::new(SchemeKind::Gaussian, 1).unwrap();
        let pts = [-2.0, 0.0, 2.0];
        let bodies: Vec<ConvexBody> = pts
            .iter()
            .map(|&p| ConvexBody::singleton(vec![p]).unwrap())
            .collect();
        let c = ClosenessMatrix::complete(3);
        let k = 4u64;
        let eps = RiskMatrix::from_pair_fn(3, |i, j| {
            let sp = solve_pairwise(&scheme, &bodies[i], &bodies[j], 1e-10).unwrap();
            sp.opt.exp()
        })
        .unwrap();
        let (alpha, risk) = optimal_shifts(&eps, &c, k, None).unwrap();
        let mut table = DetectorTable::new(3, k as usize, alpha).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let sp = solve_pairwise(&scheme, &bodies[i], &bodies[j], 1e-10).unwrap();
                table.set_pair(i, j, build_detector(&sp, &scheme).unwrap()).unwrap();
            }
        }
        let trials = 10_000;
        let truth = 1usize; // middle hypothesis is the hardest
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut rejected_truth = 0usize;
        let mut accepted_far = 0usize;
        for _ in 0..trials {
            let sample = scheme.sample(&pts[truth..=truth], &mut rng, k as usize).unwrap();
            let acc = aggregate_accept(&table, &c, &sample).unwrap();
            if !acc.contains(&truth) {
                rejected_truth += 1;
            }
            if acc.iter().any(|&i| i != truth && c.separated(truth, i)) {
                accepted_far += 1;
            }
        }
        let bound = risk;
        for count in [rejected_truth, accepted_far] {
            let p = count as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt().max(1e-4);
            assert!(p <= bound + 4.0 * se, "p={p} bound={bound}");
        }
    }
}
