mod common;

use proptest::prelude::*;
use sparse_deconv::experiments::geometric_blur;
use sparse_deconv::signals::observe;
use sparse_deconv::solver::{check_recovery, solve_l1, solve_l1_oracle_1dof, solve_l1_support, L1Problem};
use sparse_deconv::{BgModel, Error, Filter, SolverConfig, Window};

fn gaussian_window(seed: u64, n: usize) -> Window {
    let x = sparse_deconv::signals::sample_bg(&BgModel::new(1.0, seed).unwrap(), 0..n as i64, 0).unwrap();
    Window::new(-3, x.values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matches_vertex_enumeration(seed in 0u64..10_000, n in 8usize..16, lo in -2i64..=0, d in 2usize..=4) {
        let hi = lo + d as i64 - 1;
        prop_assume!(lo <= 0 && hi >= 0);
        let y = gaussian_window(seed, n);
        let res = solve_l1_support(&y, lo, hi, &Filter::delta(0), &SolverConfig::default()).unwrap();
        let rows = common::conv_rows(&y.values, d);
        let c: Vec<f64> = (0..d).map(|j| if lo + j as i64 == 0 { 1.0 } else { 0.0 }).collect();
        let best = common::lp_vertex_min(&rows, &c);
        prop_assert!((res.objective - best).abs() <= 1e-8 * (1.0 + best), "{} vs {}", res.objective, best);
        prop_assert!(res.constraint_residual <= 1e-9);
        prop_assert!((res.w.get(0) - 1.0).abs() <= 1e-9);
        prop_assert_eq!(res.valid_len, n - d + 1);
    }

    #[test]
    fn general_constraint_is_met(seed in 0u64..10_000) {
        let y = gaussian_window(seed, 40);
        let a_tilde = Filter::new(-1, vec![0.5, 1.0, -0.25]).unwrap();
        let res = solve_l1(&y, 2, &a_tilde, &SolverConfig::default()).unwrap();
        // ⟨ã, w†⟩ = Σ_t ã_t w_{-t}
        let inner: f64 = a_tilde.support().map(|t| a_tilde.get(t) * res.w.get(-t)).sum();
        prop_assert!((inner - 1.0).abs() <= 1e-8);
        let rows = common::conv_rows(&y.values, 5);
        let c: Vec<f64> = (0..5).map(|j| a_tilde.get(-(j as i64 - 2))).collect();
        let best = common::lp_vertex_min(&rows, &c);
        prop_assert!((res.objective - best).abs() <= 1e-8 * (1.0 + best));
    }

    #[test]
    fn invariant_to_scale_and_translation(seed in 0u64..10_000, c in 0.01f64..100.0, start in -50i64..50) {
        let y = gaussian_window(seed, 60);
        let cfg = SolverConfig::default();
        let base = solve_l1(&y, 1, &Filter::delta(0), &cfg).unwrap();
        let moved = Window::new(start, y.scaled(-c).values).unwrap();
        let res = solve_l1(&moved, 1, &Filter::delta(0), &cfg).unwrap();
        prop_assert!((res.objective - c * base.objective).abs() <= 1e-8 * c * base.objective);
        prop_assert!(common::max_diff(&res.w, &common::as_map(&base.w)) <= 1e-6);
    }

    #[test]
    fn oracle_objective_matches_direct_sum(seed in 0u64..10_000, free in prop::sample::select(vec![-2i64, -1, 1, 3])) {
        let y = gaussian_window(seed, 30);
        let o = solve_l1_oracle_1dof(&y, 0, free).unwrap();
        let lo = free.min(0);
        let brute = common::one_dof_objective(&y.values, (-lo) as usize, (free - lo) as usize, o.w1);
        prop_assert!((o.objective - brute).abs() <= 1e-12 * (1.0 + brute));
        // no grid point does better
        for i in -400..=400 {
            let w1 = o.w1 + i as f64 * 0.01;
            let v = common::one_dof_objective(&y.values, (-lo) as usize, (free - lo) as usize, w1);
            prop_assert!(v >= o.objective - 1e-12);
        }
    }
}

#[test]
fn recovers_first_order_inverse_at_low_sparsity() {
    let a = geometric_blur(0.4).unwrap();
    let a_inv = Filter::new(0, vec![1.0, -0.4]).unwrap();
    let model = BgModel::new(0.1, 9).unwrap();
    let obs = observe(&a, &model, -200..201, 0).unwrap();
    let res = solve_l1(&obs.y, 1, &Filter::delta(0), &SolverConfig::default()).unwrap();
    assert!(res.converged && res.certified, "{res:?}");
    let rec = check_recovery(&res.w, &a_inv, 1e-3).unwrap();
    assert!(rec.success, "{rec:?}");
    assert_eq!(rec.shift, 0);
}

#[test]
fn fails_at_high_density() {
    let a = geometric_blur(0.6).unwrap();
    let a_inv = Filter::new(0, vec![1.0, -0.6]).unwrap();
    let model = BgModel::new(0.9, 9).unwrap();
    let obs = observe(&a, &model, -200..201, 0).unwrap();
    let res = solve_l1(&obs.y, 1, &Filter::delta(0), &SolverConfig::default()).unwrap();
    assert!(!check_recovery(&res.w, &a_inv, 1e-3).unwrap().success);
}

#[test]
fn recovery_up_to_shift_and_scale() {
    let a_inv = Filter::new(-1, vec![0.3, 1.0, -0.2]).unwrap();
    let rec = check_recovery(&a_inv.shift(2).scale(-3.0), &a_inv, 1e-9).unwrap();
    assert!(rec.success);
    assert_eq!(rec.shift, -2);
    assert!((rec.scale + 1.0 / 3.0).abs() < 1e-15);
    let off = a_inv.axpy(0.01, &Filter::delta(1));
    assert!(!check_recovery(&off, &a_inv, 1e-3).unwrap().success);
    assert!(matches!(check_recovery(&Filter::zero(), &a_inv, 1e-3), Err(Error::ZeroFilter)));
}

#[test]
fn zero_free_taps_is_trivial() {
    let y = gaussian_window(1, 20);
    let res = solve_l1(&y, 0, &Filter::delta(0), &SolverConfig::default()).unwrap();
    assert_eq!(res.w, Filter::delta(0));
    let mean_abs = y.values.iter().map(|v| v.abs()).sum::<f64>() / 20.0;
    assert!((res.objective - mean_abs).abs() < 1e-12);
}

#[test]
fn rejects_bad_inputs() {
    let y = gaussian_window(1, 5);
    let cfg = SolverConfig::default();
    assert!(matches!(
        solve_l1(&y, 3, &Filter::delta(0), &cfg),
        Err(Error::InsufficientMargin(_))
    ));
    let zero = Window::new(0, vec![0.0; 10]).unwrap();
    assert!(matches!(solve_l1(&zero, 1, &Filter::delta(0), &cfg), Err(Error::Degenerate(_))));
    assert!(matches!(solve_l1(&y, 1, &Filter::zero(), &cfg), Err(Error::ZeroFilter)));
    assert!(solve_l1_support(&y, 1, 2, &Filter::delta(0), &cfg).is_err());
    let bad = SolverConfig { rho: -1.0, ..Default::default() };
    assert!(solve_l1(&y, 1, &Filter::delta(0), &bad).is_err());
    assert!(solve_l1_oracle_1dof(&y, 0, 0).is_err());
}

#[test]
fn observer_sees_every_iteration() {
    let y = gaussian_window(4, 80);
    let problem = L1Problem::new(&y, -2, 2, &Filter::delta(0)).unwrap();
    let mut seen = Vec::new();
    let mut obs = |r: &sparse_deconv::solver::IterateRecord| seen.push(*r);
    let cfg = SolverConfig { polish_every: 0, ..Default::default() };
    let res = problem.solve(&cfg, Some(&mut obs)).unwrap();
    assert_eq!(seen.len(), res.iterations);
    assert!(seen.windows(2).all(|w| w[1].iter == w[0].iter + 1));
}

#[test]
fn polish_agrees_with_plain_admm() {
    let y = gaussian_window(5, 100);
    let plain = SolverConfig { polish_every: 0, max_iters: 50_000, ..Default::default() };
    let a = solve_l1(&y, 2, &Filter::delta(0), &plain).unwrap();
    let b = solve_l1(&y, 2, &Filter::delta(0), &SolverConfig::default()).unwrap();
    assert!(b.iterations <= a.iterations);
    assert!((a.objective - b.objective).abs() < 1e-6, "{} {}", a.objective, b.objective);
}
