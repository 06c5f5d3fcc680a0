//! Detectors for pairs of convex hypotheses: construction from an optimal
//! pair, exact risk verification, and the calculus for repeated observations.

use crate::convexgeom::{ConvexBody, SaddlePoint};
use crate::error::{Error, Result};
use crate::schemes::{AffineFunctional, Observation, SampleSummary, Scheme, SchemeKind};

/// A likelihood-ratio detector `phi(omega) = (1/2) ln(p_mu*(omega) /
/// p_nu*(omega)) - shift`, stored in closed affine/tabular form so that
/// evaluation is a dot product. Positive values vote for the first
/// hypothesis, negative for the second.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub scheme: Scheme,
    pub mu_star: Vec<f64>,
    pub nu_star: Vec<f64>,
    /// Additive offset already folded into the affine form.
    pub shift: f64,
    /// Log of the detector's risk bound: both error exponents are `<= risk_log`.
    pub risk_log: f64,
    affine: AffineFunctional,
}

impl Detector {
    /// The evaluation form, with the shift folded in.
    pub fn as_affine(&self) -> &AffineFunctional {
        &self.affine
    }

    pub fn eval(&self, omega: &Observation) -> f64 {
        self.affine.eval(omega)
    }

    /// Sum of `eval` over all observations folded into the summary.
    pub fn eval_summed(&self, summary: &SampleSummary) -> f64 {
        self.affine.eval_summed(summary)
    }

    /// Same detector with its shift replaced by `alpha`.
    pub fn with_shift(&self, alpha: f64) -> Detector {
        let mut d = self.clone();
        d.affine = self.affine.shifted(alpha - self.shift);
        d.shift = alpha;
        d
    }
}

/// Builds the balanced likelihood-ratio detector for an optimal pair; its
/// two-sided risk is exactly `exp(saddle.opt)` and its shift is 0.
pub fn build_detector(saddle: &SaddlePoint, scheme: &Scheme) -> Result<Detector> {
    let n = scheme.dim();
    if saddle.mu_star.len() != n || saddle.nu_star.len() != n {
        return Err(Error::InputError(
            "optimal pair dimension differs from the scheme".into(),
        ));
    }
    scheme.check_point(&saddle.mu_star)?;
    scheme.check_point(&saddle.nu_star)?;
    let (a, b): (Vec<f64>, f64) = match scheme.kind {
        SchemeKind::Gaussian => {
            let a: Vec<f64> = saddle
                .mu_star
                .iter()
                .zip(&saddle.nu_star)
                .map(|(m, v)| 0.5 * (m - v))
                .collect();
            let b = 0.25
                * saddle
                    .nu_star
                    .iter()
                    .zip(&saddle.mu_star)
                    .map(|(v, m)| v * v - m * m)
                    .sum::<f64>();
            (a, b)
        }
        SchemeKind::Poisson => {
            let a: Vec<f64> = saddle
                .mu_star
                .iter()
                .zip(&saddle.nu_star)
                .map(|(m, v)| 0.5 * (m / v).ln())
                .collect();
            let b = 0.5
                * saddle
                    .nu_star
                    .iter()
                    .zip(&saddle.mu_star)
                    .map(|(v, m)| v - m)
                    .sum::<f64>();
            (a, b)
        }
        SchemeKind::Discrete => {
            let a: Vec<f64> = saddle
                .mu_star
                .iter()
                .zip(&saddle.nu_star)
                .map(|(m, v)| 0.5 * (m / v).ln())
                .collect();
            (a, 0.0)
        }
    };
    Ok(Detector {
        scheme: *scheme,
        mu_star: saddle.mu_star.clone(),
        nu_star: saddle.nu_star.clone(),
        shift: 0.0,
        risk_log: saddle.opt,
        affine: AffineFunctional { a, b },
    })
}

/// Rebuilds a detector from its stored optimal pair, shift, and risk log.
/// The affine form is recomputed from the pair with the same closed forms as
/// `build_detector`, so persisted detectors round-trip bit-stably.
pub fn detector_from_parts(
    scheme: &Scheme,
    mu_star: Vec<f64>,
    nu_star: Vec<f64>,
    shift: f64,
    risk_log: f64,
) -> Result<Detector> {
    let saddle = SaddlePoint {
        grad_mu: vec![0.0; mu_star.len()],
        grad_nu: vec![0.0; nu_star.len()],
        mu_star,
        nu_star,
        opt: risk_log,
        certified_gap: 0.0,
    };
    let mut det = build_detector(&saddle, scheme)?;
    if shift != 0.0 {
        det = det.with_shift(shift);
    } else {
        // Preserve a signed zero bit-exactly without touching the affine form.
        det.shift = shift;
    }
    Ok(det)
}

/// Exact worst-case error bounds of a detector over two bodies:
/// `sup_{mu in X1} E_mu[e^{-phi}]` and `sup_{nu in X2} E_nu[e^{+phi}]`.
///
/// In every scheme the log of the integrand's expectation is a monotone
/// function of a linear form in the parameter, so each supremum reduces to
/// one linear maximization over the body.
pub fn verify_detector_risk(
    detector: &Detector,
    x1: &ConvexBody,
    x2: &ConvexBody,
) -> Result<(f64, f64)> {
    let lhs1 = sup_exp_moment(&detector.scheme, &detector.affine.negated(), x1)?;
    let lhs2 = sup_exp_moment(&detector.scheme, &detector.affine, x2)?;
    Ok((lhs1, lhs2))
}

/// `sup over body of E_mu[e^{phi(omega)}]`, exact via linear maximization.
fn sup_exp_moment(scheme: &Scheme, phi: &AffineFunctional, body: &ConvexBody) -> Result<f64> {
    if body.dim() != scheme.dim() {
        return Err(Error::InputError(
            "body dimension differs from the scheme".into(),
        ));
    }
    // Coefficients of the linear form in mu inside the log-moment.
    let coeff: Vec<f64> = match scheme.kind {
        SchemeKind::Gaussian => phi.a.clone(),
        SchemeKind::Poisson => phi.a.iter().map(|ai| ai.exp() - 1.0).collect(),
        SchemeKind::Discrete => phi.a.iter().map(|ai| ai.exp()).collect(),
    };
    let arg_max = body.linear_maximize(&coeff)?;
    scheme.log_mgf(phi, &arg_max).map(f64::exp)
}

/// A detector applied to `reps` independent observations by summation;
/// the risk exponent scales linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedDetector {
    pub base: Detector,
    pub reps: usize,
    pub risk_log: f64,
}

impl RepeatedDetector {
    pub fn eval(&self, sample: &[Observation]) -> Result<f64> {
        if sample.len() != self.reps {
            return Err(Error::InputError(format!(
                "expected {} observations, got {}",
                self.reps,
                sample.len()
            )));
        }
        Ok(sample.iter().map(|o| self.base.eval(o)).sum())
    }
}

/// Lifts a detector to `k` repeated observations.
pub fn repeated_detector(detector: &Detector, k: usize) -> Result<RepeatedDetector> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "repetition count must be >= 1".into(),
        });
    }
    Ok(RepeatedDetector {
        base: detector.clone(),
        reps: k,
        risk_log: detector.risk_log * k as f64,
    })
}

/// Smallest `k` with `eps_star^k <= eps_target`.
pub fn sample_size_for_risk(eps_star: f64, eps_target: f64) -> Result<u64> {
    if !(eps_star > 0.0) || !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("risks must lie in (0,1), got {eps_star} and {eps_target}"),
        });
    }
    if eps_star >= 1.0 {
        return Err(Error::Infeasible(format!(
            "single-observation risk {eps_star} admits no repetition count"
        )));
    }
    let k = (eps_target.ln() / eps_star.ln()).ceil();
    Ok((k as u64).max(1))
}

/// Observation count within which thresholding a near-optimal detector meets
/// the risk any test whatsoever needs `k_bar` observations to meet:
/// `ceil(2 k_bar / (1 - 2 ln 2 / ln(1/eps)))`. Requires `eps < 1/4`, where
/// the denominator is at least `1 - ln 4 / ln 4 > 0`... i.e. positive.
pub fn near_optimality_factor(eps: f64, k_bar: u64) -> Result<u64> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("risk must lie in (0, 1/4), got {eps}"),
        });
    }
    if k_bar == 0 {
        return Err(Error::InvalidParameter {
            name: "k_bar",
            reason: "reference observation count must be >= 1".into(),
        });
    }
    let denom = 1.0 - 2.0 * 2f64.ln() / (1.0 / eps).ln();
    Ok((2.0 * k_bar as f64 / denom).ceil() as u64)
}

/// Detector induced by a deterministic accept/reject test with two-sided
/// error probability `eps_bar`: scales the test's sign by
/// `(1/2) ln((1-eps_bar)/eps_bar)`; the induced risk is
/// `2 sqrt(eps_bar (1-eps_bar))`.
pub struct TestDetector<F> {
    pub magnitude: f64,
    pub risk: f64,
    sign: F,
}

impl<F: Fn(&Observation) -> i8> TestDetector<F> {
    pub fn eval(&self, omega: &Observation) -> f64 {
        self.magnitude * f64::from((self.sign)(omega))
    }
}

pub fn detector_from_test<F: Fn(&Observation) -> i8>(
    test_sign: F,
    eps_bar: f64,
) -> Result<TestDetector<F>> {
    if !(eps_bar > 0.0 && eps_bar < 0.5) {
        return Err(Error::InvalidParameter {
            name: "eps_bar",
            reason: format!("test error level must lie in (0, 1/2), got {eps_bar}"),
        });
    }
    Ok(TestDetector {
        magnitude: 0.5 * ((1.0 - eps_bar) / eps_bar).ln(),
        risk: 2.0 * (eps_bar * (1.0 - eps_bar)).sqrt(),
        sign: test_sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexgeom::{gaussian_box_saddle, solve_pairwise};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_box() -> (Scheme, ConvexBody, ConvexBody, SaddlePoint) {
        let scheme = Scheme::new(SchemeKind::Gaussian, 2).unwrap();
        let x1 = ConvexBody::new_box(vec![0.1, 0.0], vec![1.1, 1.0]).unwrap();
        let x2 = ConvexBody::new_box(vec![-1.0, -1.0], vec![0.0, 0.0]).unwrap();
        let sp = gaussian_box_saddle(&scheme, &x1, &x2).unwrap();
        (scheme, x1, x2, sp)
    }

    #[test]
    fn two_box_affine_form() {
        let (scheme, _, _, sp) = two_box();
        let d = build_detector(&sp, &scheme).unwrap();
        let phi = d.as_affine();
        assert!((phi.a[0] - 0.05).abs() < 1e-15);
        assert!(phi.a[1].abs() < 1e-15);
        assert!((phi.b - (-0.0025)).abs() < 1e-15);
        assert!((d.risk_log.exp() - (-0.00125f64).exp()).abs() < 1e-12);
        let v = d.eval(&Observation::Real(vec![1.0, 7.0]));
        assert!((v - (0.05 - 0.0025)).abs() < 1e-15);
    }

    #[test]
    fn identical_endpoints_are_trivial() {
        let scheme = Scheme::new(SchemeKind::Gaussian, 2).unwrap();
        let p = ConvexBody::singleton(vec![0.4, 0.4]).unwrap();
        let sp = solve_pairwise(&scheme, &p, &p, 1e-9).unwrap();
        let d = build_detector(&sp, &scheme).unwrap();
        assert_eq!(d.eval(&Observation::Real(vec![3.0, -3.0])), 0.0);
        assert_eq!(d.risk_log.exp(), 1.0);
    }

    #[test]
    fn discrete_table_values() {
        let scheme = Scheme::new(SchemeKind::Discrete, 2).unwrap();
        let x = ConvexBody::singleton(vec![0.5, 0.5]).unwrap();
        let y = ConvexBody::singleton(vec![0.9, 0.1]).unwrap();
        let sp = solve_pairwise(&scheme, &x, &y, 1e-9).unwrap();
        let d = build_detector(&sp, &scheme).unwrap();
        let t1 = d.eval(&Observation::Category(1));
        let t2 = d.eval(&Observation::Category(2));
        assert!((t1 - 0.5 * (0.5f64 / 0.9).ln()).abs() < 1e-12);
        assert!((t2 - 0.5 * (0.5f64 / 0.1).ln()).abs() < 1e-12);
        assert!((t1 + 0.2939).abs() < 1e-4 && (t2 - 0.8047).abs() < 1e-4);
    }

    #[test]
    fn eval_matches_log_density_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in [SchemeKind::Gaussian, SchemeKind::Poisson, SchemeKind::Discrete] {
            let scheme = Scheme::new(kind, 2).unwrap();
            let (mu, nu) = match kind {
                SchemeKind::Gaussian => (vec![0.5, -0.2], vec![-0.1, 0.3]),
                SchemeKind::Poisson => (vec![2.0, 5.0], vec![3.0, 1.0]),
                SchemeKind::Discrete => (vec![0.4, 0.6], vec![0.7, 0.3]),
            };
            let x = ConvexBody::singleton(mu.clone()).unwrap();
            let y = ConvexBody::singleton(nu.clone()).unwrap();
            let sp = solve_pairwise(&scheme, &x, &y, 1e-10).unwrap();
            let d = build_detector(&sp, &scheme).unwrap().with_shift(0.37);
            for _ in 0..50 {
                let omega = scheme.sample_one_unchecked(&mu, &mut rng);
                let direct = 0.5
                    * (scheme.log_density(&mu, &omega).unwrap()
                        - scheme.log_density(&nu, &omega).unwrap())
                    - 0.37;
                assert!((d.eval(&omega) - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn antisymmetry_under_swap() {
        let (scheme, _, _, sp) = two_box();
        let swapped = SaddlePoint {
            mu_star: sp.nu_star.clone(),
            nu_star: sp.mu_star.clone(),
            opt: sp.opt,
            grad_mu: sp.grad_nu.clone(),
            grad_nu: sp.grad_mu.clone(),
            certified_gap: sp.certified_gap,
        };
        let d = build_detector(&sp, &scheme).unwrap();
        let d_rev = build_detector(&swapped, &scheme).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let omega = scheme.sample_one_unchecked(&[0.3, 0.3], &mut rng);
            let (f, g) = (d.eval(&omega), d_rev.eval(&omega));
            assert!((f + g).abs() < 1e-12, "{f} vs {g}");
        }
    }

    #[test]
    fn verified_risk_is_attained() {
        let (scheme, x1, x2, sp) = two_box();
        let d = build_detector(&sp, &scheme).unwrap();
        let (lhs1, lhs2) = verify_detector_risk(&d, &x1, &x2).unwrap();
        let eps = d.risk_log.exp();
        assert!((lhs1 - eps).abs() < 1e-8, "side 1: {lhs1} vs {eps}");
        assert!((lhs2 - eps).abs() < 1e-8, "side 2: {lhs2} vs {eps}");
    }

    #[test]
    fn verified_risk_exact_for_all_schemes() {
        // Singleton bodies make the sup a plain moment identity.
        for kind in [SchemeKind::Gaussian, SchemeKind::Poisson, SchemeKind::Discrete] {
            let scheme = Scheme::new(kind, 2).unwrap();
            let (mu, nu) = match kind {
                SchemeKind::Gaussian => (vec![0.5, -0.2], vec![-0.1, 0.3]),
                SchemeKind::Poisson => (vec![2.0, 5.0], vec![3.0, 1.0]),
                SchemeKind::Discrete => (vec![0.4, 0.6], vec![0.7, 0.3]),
            };
            let x = ConvexBody::singleton(mu).unwrap();
            let y = ConvexBody::singleton(nu).unwrap();
            let sp = solve_pairwise(&scheme, &x, &y, 1e-11).unwrap();
            let d = build_detector(&sp, &scheme).unwrap();
            let (lhs1, lhs2) = verify_detector_risk(&d, &x, &y).unwrap();
            let eps = d.risk_log.exp();
            assert!((lhs1 - eps).abs() < 1e-9 && (lhs2 - eps).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_moves_the_two_sides_oppositely() {
        let (scheme, x1, x2, sp) = two_box();
        let d = build_detector(&sp, &scheme).unwrap();
        let (l1, l2) = verify_detector_risk(&d, &x1, &x2).unwrap();
        let s = 0.3;
        let (l1s, l2s) = verify_detector_risk(&d.with_shift(s), &x1, &x2).unwrap();
        assert!((l1s - l1 * s.exp()).abs() < 1e-12);
        assert!((l2s - l2 * (-s).exp()).abs() < 1e-12);
    }

    #[test]
    fn empirical_error_rate_below_risk() {
        let (scheme, _, _, sp) = two_box();
        let d = build_detector(&sp, &scheme).unwrap();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sample = scheme.sample(&sp.mu_star, &mut rng, n).unwrap();
        let misses = sample.iter().filter(|o| d.eval(o) < 0.0).count();
        let p = misses as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(p <= d.risk_log.exp() + 4.0 * se);
    }

    #[test]
    fn repeated_detector_tensorizes() {
        let (scheme, _, _, sp) = two_box();
        let d = build_detector(&sp, &scheme).unwrap();
        let one = repeated_detector(&d, 1).unwrap();
        assert_eq!(one.risk_log, d.risk_log);
        let k = 3;
        let rep = repeated_detector(&d, k).unwrap();
        assert!((rep.risk_log - 3.0 * d.risk_log).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sample = scheme.sample(&[0.2, 0.2], &mut rng, k).unwrap();
        let total: f64 = sample.iter().map(|o| d.eval(o)).sum();
        assert_eq!(rep.eval(&sample).unwrap(), total);
        assert!(rep.eval(&sample[..2]).is_err());
        // Squared risk example.
        let two = repeated_detector(&d, 2).unwrap();
        assert!((two.risk_log.exp() - 0.997504).abs() < 1e-6);
        let big = repeated_detector(&d, 3685).unwrap();
        assert!(big.risk_log.exp() <= 0.01);
        assert!((big.risk_log.exp() - 0.00995).abs() < 5e-5);
    }

    #[test]
    fn sample_size_examples() {
        assert_eq!(sample_size_for_risk(0.3, 0.3).unwrap(), 1);
        assert_eq!(sample_size_for_risk(0.5, 0.01).unwrap(), 7);
        let eps_star = (-0.00125f64).exp();
        assert_eq!(sample_size_for_risk(eps_star, 0.01).unwrap(), 3685);
        assert!(sample_size_for_risk(1.0, 0.01).is_err());
        assert!(sample_size_for_risk(1.5, 0.01).is_err());
    }

    #[test]
    fn near_optimality_examples() {
        assert_eq!(near_optimality_factor(0.01, 100).unwrap(), 287);
        assert_eq!(near_optimality_factor(1e-8, 100).unwrap(), 217);
        assert_eq!(near_optimality_factor(0.01, 1).unwrap(), 3);
        assert!(near_optimality_factor(0.25, 100).is_err());
        assert!(near_optimality_factor(0.3, 100).is_err());
    }

    #[test]
    fn sign_test_detector_closed_forms() {
        let t = detector_from_test(|_: &Observation| 1i8, 0.25).unwrap();
        assert!((t.magnitude - 0.5 * 3f64.ln()).abs() < 1e-12);
        assert!((t.risk - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((t.eval(&Observation::Category(1)) - t.magnitude).abs() < 1e-15);
        let t = detector_from_test(|_: &Observation| -1i8, 0.01).unwrap();
        assert!((t.risk - 0.198997).abs() < 1e-6);
        let t = detector_from_test(|_: &Observation| 1i8, 0.499999).unwrap();
        assert!(t.magnitude < 1e-5 && t.risk > 0.999999);
        assert!(detector_from_test(|_: &Observation| 1i8, 0.5).is_err());
    }
}
