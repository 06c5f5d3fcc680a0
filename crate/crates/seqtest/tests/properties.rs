//! Cross-cutting invariants, property-style: self-checks for the shared test
//! oracles, randomized agreement between independent computation routes, and
//! run-level guarantees of the built tests.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtest::analysis::{k_plus, s_bar_gaussian, s_star, separation_default, worst_case_bound};
use seqtest::convexgeom::{solve_pairwise, ConvexBody};
use seqtest::harness::{run_experiment, two_box_config};
use seqtest::multitest::{optimal_shifts, risk_matrix_norm, ClosenessMatrix, RiskMatrix};
use seqtest::schemes::{Scheme, SchemeKind};
use seqtest::sequential::{build_sequential, compute_schedule};

#[test]
fn oracles_reproduce_known_answers() {
    let mut eig = common::jacobi_eigenvalues(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
    eig.sort_by(f64::total_cmp);
    assert!((eig[0] - 1.0).abs() <= 1e-12 && (eig[1] - 3.0).abs() <= 1e-12);

    let diag = common::jacobi_eigenvalues(&[
        vec![5.0, 0.0, 0.0],
        vec![0.0, -3.0, 0.0],
        vec![0.0, 0.0, 2.0],
    ]);
    assert_eq!(diag, vec![5.0, -3.0, 2.0]);

    let grad = common::fd_gradient(
        &|x: &[f64]| x.iter().map(|v| v * v).sum::<f64>(),
        &[1.0, 2.0, 3.0],
        1e-5,
    );
    for (g, want) in grad.iter().zip([2.0, 4.0, 6.0]) {
        assert!((g - want).abs() <= 1e-8, "fd gradient {g} vs {want}");
    }

    let oracle =
        common::gaussian_box_pair_oracle(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 0.0], &[3.0, 1.0]);
    assert!((oracle.opt - (-0.125)).abs() <= 1e-15);
    assert_eq!(oracle.mu, vec![1.0, 0.0]);
    assert_eq!(oracle.nu, vec![2.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(64)
    })]

    #[test]
    fn power_iteration_norm_matches_the_dense_eigensolve(
        n in 2usize..7,
        seed in 0u64..1_000_000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = RiskMatrix::from_pair_fn(n, |_, _| rng.random_range(0.01..0.99)).unwrap();
        let c = ClosenessMatrix::complete(n);
        let norm = risk_matrix_norm(&eps, &c, 1).unwrap();
        let mut hollow = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    hollow[i][j] = eps.get(i, j);
                }
            }
        }
        let rho = common::jacobi_eigenvalues(&hollow)
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        prop_assert!((norm - rho).abs() <= 1e-9, "norm {norm} vs dense {rho}");
    }

    #[test]
    fn rate_gradients_match_finite_differences(
        kind_idx in 0usize..3,
        raw_mu in proptest::collection::vec(0.1f64..3.0, 1..5),
        raw_nu in proptest::collection::vec(0.1f64..3.0, 1..5),
    ) {
        let dim = raw_mu.len().min(raw_nu.len());
        let kind = [SchemeKind::Gaussian, SchemeKind::Poisson, SchemeKind::Discrete][kind_idx];
        let scheme = Scheme::new(kind, dim).unwrap();
        let normalize = |v: &[f64]| -> Vec<f64> {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        };
        let (mu, nu) = if kind == SchemeKind::Discrete {
            (normalize(&raw_mu[..dim]), normalize(&raw_nu[..dim]))
        } else {
            (raw_mu[..dim].to_vec(), raw_nu[..dim].to_vec())
        };
        let rate = scheme.rate_unchecked(&mu, &nu);
        let f_mu = |x: &[f64]| scheme.rate_unchecked(x, &nu).value;
        let f_nu = |x: &[f64]| scheme.rate_unchecked(&mu, x).value;
        for (grad, fd) in [
            (&rate.grad_mu, common::fd_gradient(&f_mu, &mu, 1e-5)),
            (&rate.grad_nu, common::fd_gradient(&f_nu, &nu, 1e-5)),
        ] {
            for (g, h) in grad.iter().zip(&fd) {
                prop_assert!(
                    (g - h).abs() <= 1e-5 * g.abs().max(1.0),
                    "gradient {g} vs finite difference {h} ({kind:?})"
                );
            }
        }
    }

    #[test]
    fn solver_matches_the_box_pair_closed_form(
        dim in 1usize..4,
        seed in 0u64..1_000_000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scheme = Scheme::new(SchemeKind::Gaussian, dim).unwrap();
        let lo1: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..0.0)).collect();
        let hi1: Vec<f64> = lo1.iter().map(|&l| l + rng.random_range(0.3..2.0)).collect();
        let mut lo2: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..0.0)).collect();
        let mut hi2: Vec<f64> = lo2.iter().map(|&l| l + rng.random_range(0.3..2.0)).collect();
        let width = hi2[0] - lo2[0];
        lo2[0] = hi1[0] + rng.random_range(0.05..1.0);
        hi2[0] = lo2[0] + width;
        let b1 = ConvexBody::new_box(lo1.clone(), hi1.clone()).unwrap();
        let b2 = ConvexBody::new_box(lo2.clone(), hi2.clone()).unwrap();
        let sp = solve_pairwise(&scheme, &b1, &b2, 1e-10).unwrap();
        let oracle = common::gaussian_box_pair_oracle(&lo1, &hi1, &lo2, &hi2);
        prop_assert!(
            (sp.opt - oracle.opt).abs() <= 1e-8,
            "solver {} vs closed form {}",
            sp.opt,
            oracle.opt
        );
    }

    #[test]
    fn perron_shifts_ignore_power_of_two_risk_rescaling(
        n in 2usize..7,
        seed in 0u64..1_000_000,
        scale_pow in 1u32..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vals = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                vals[i][j] = rng.random_range(0.1..0.9);
            }
        }
        let scale = 0.5f64.powi(scale_pow as i32);
        let m1 = RiskMatrix::from_pair_fn(n, |i, j| vals[i][j]).unwrap();
        let m2 = RiskMatrix::from_pair_fn(n, |i, j| vals[i][j] * scale).unwrap();
        let c = ClosenessMatrix::complete(n);
        let (s1, _) = optimal_shifts(&m1, &c, 1, Some(1e-10)).unwrap();
        let (s2, _) = optimal_shifts(&m2, &c, 1, Some(1e-10)).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(
                    s1.get(i, j).to_bits() == s2.get(i, j).to_bits(),
                    "shift ({i},{j}) drifted under rescaling: {} vs {}",
                    s1.get(i, j),
                    s2.get(i, j)
                );
            }
        }
    }

    #[test]
    fn observation_lower_bounds_sit_below_the_worst_case_budget(
        eps in 0.001f64..0.0624,
        d in 1e-5f64..1e-2,
    ) {
        let (value, floor) = k_plus(eps, d).unwrap();
        prop_assert!(value >= floor, "refined bound {value} below the floor {floor}");
        let (_, bound) = worst_case_bound(2, eps, d, 1.0).unwrap();
        prop_assert!(bound >= value, "worst-case budget {bound} below the lower bound {value}");
    }
}

#[test]
fn raising_the_risk_level_never_lengthens_the_schedule() {
    let mut last_stages = usize::MAX;
    for eps in [0.001, 0.005, 0.01, 0.05, 0.1, 0.2] {
        let cfg = two_box_config(2, 0.1, eps);
        let family = cfg.family().unwrap();
        let schedule = compute_schedule(&family, &cfg.schedule_config()).unwrap();
        assert!(
            schedule.stages <= last_stages,
            "schedule grew from {last_stages} to {} stages when eps rose to {eps}",
            schedule.stages
        );
        last_stages = schedule.stages;

        let s = schedule.stages;
        let ln_arg = (s as f64 * 4.0 / eps).ln();
        assert_eq!(schedule.eps_s, eps / (2.0 * s as f64));
        for (i, (&r, &kb)) in schedule.r.iter().zip(&schedule.kbar).enumerate() {
            assert_eq!(kb, 1u64 << i);
            assert!((r - ln_arg / kb as f64).abs() <= 1e-15 * r);
            assert_eq!(schedule.delta[i], (-r).exp());
        }
        let d = separation_default(&family).unwrap().d;
        assert!(
            *schedule.r.last().unwrap() < d,
            "terminal margin must undercut the separation"
        );
    }
}

#[test]
fn aggregates_recompute_exactly_from_the_records() {
    let mut cfg = two_box_config(2, 0.5, 0.05);
    cfg.trials = 128;
    cfg.seed = 11;
    let report = run_experiment(&cfg).unwrap();
    let records = &report.records;
    let n = records.len();
    assert_eq!(n as u64, cfg.trials);

    let mut obs: Vec<u64> = records.iter().map(|r| r.observations).collect();
    obs.sort_unstable();
    let quantile = |q: f64| obs[((q * n as f64).ceil() as usize).clamp(1, n) - 1] as f64;
    let wrong = records
        .iter()
        .filter(|r| r.color_accepted.is_some() && !r.correct)
        .count();
    let agg = &report.aggregates;
    assert_eq!(agg.error_rate, wrong as f64 / n as f64);
    assert_eq!(
        agg.mean_observations,
        obs.iter().sum::<u64>() as f64 / n as f64
    );
    assert_eq!(agg.median_observations, quantile(0.5));
    for &(q, v) in &agg.quantiles {
        assert_eq!(v, quantile(q));
    }
    assert_eq!(agg.min_observations, obs[0]);
    assert_eq!(agg.max_observations, obs[n - 1]);
}

#[test]
fn trials_resolve_correctly_no_later_than_the_stage_bound() {
    let mut cfg = two_box_config(2, 0.1, 0.1);
    cfg.trials = 1000;
    cfg.seed = 271828;
    let report = run_experiment(&cfg).unwrap();
    let test = build_sequential(cfg.family().unwrap(), &cfg.schedule_config()).unwrap();
    let sep = separation_default(&test.family).unwrap();

    let mut on_time = 0u64;
    for r in &report.records {
        assert_eq!(r.s_star, s_star(&r.mu, &test).unwrap());
        let s_bar = s_bar_gaussian(&r.mu, &test, &sep).unwrap();
        assert!(
            r.s_star <= s_bar && s_bar <= test.stages.len(),
            "stage bounds out of order: s* {} vs upper bound {s_bar}",
            r.s_star
        );
        if r.correct && r.stage <= r.s_star {
            on_time += 1;
        }
    }
    let freq = on_time as f64 / cfg.trials as f64;
    let slack = 4.0 * (cfg.eps * (1.0 - cfg.eps) / cfg.trials as f64).sqrt();
    assert!(
        freq >= 1.0 - cfg.eps - slack,
        "on-time correct frequency {freq} below {}",
        1.0 - cfg.eps - slack
    );
}
