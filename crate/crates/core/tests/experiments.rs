mod common;

use proptest::prelude::*;
use sparse_deconv::experiments::{
    effective_length, geometric_blur, logistic_crossing, phase_diagram, resolve_workers, robustness_curve,
    sample_complexity_curve, spearman, stability_curve, Column, ExperimentTable, NoiseKind, PhaseGridSpec,
    RobustnessSpec, SampleComplexitySpec, StabilitySpec,
};
use sparse_deconv::filters::{inverse_error, Gain};
use sparse_deconv::{Filter, RootFactorization, SolverConfig};

/// Average ranks, 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

proptest! {
    #[test]
    fn spearman_matches_ranked_pearson(v in prop::collection::vec((0u8..6, 0u8..6), 3..30)) {
        let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
        let (rx, ry) = (ranks(&x), ranks(&y));
        let want = pearson(&rx, &ry);
        let got = spearman(&x, &y);
        if want.is_finite() {
            prop_assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        if rx.iter().any(|r| *r != rx[0]) {
            prop_assert!((spearman(&x, &x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_crossing_recovers_center(center in 0.2f64..0.8, slope in 10.0f64..60.0) {
        let x: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        let n = 10_000u64;
        let succ: Vec<u64> = x
            .iter()
            .map(|xi| (n as f64 / (1.0 + (slope * (xi - center)).exp())).round() as u64)
            .collect();
        let fit = logistic_crossing(&x, &succ, &vec![n; x.len()]).unwrap();
        prop_assert!((fit.crossing - center).abs() < 2e-3, "{fit:?}");
        prop_assert!(!fit.one_sided);
        prop_assert!(fit.stderr > 0.0 && fit.stderr < 0.01);
    }
}

#[test]
fn spearman_examples() {
    let x = [1.0, 2.0, 3.0, 4.0];
    assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
    assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    // ties use average ranks
    let y = [1.0, 1.0, 0.0, 0.0];
    assert!((spearman(&x, &y) - pearson(&ranks(&x), &ranks(&y))).abs() < 1e-15);
}

#[test]
fn logistic_one_sided_and_errors() {
    let x = [0.1, 0.2, 0.3];
    let fit = logistic_crossing(&x, &[5, 5, 5], &[5, 5, 5]).unwrap();
    assert!(fit.one_sided);
    assert!(fit.crossing.is_finite());
    assert!(logistic_crossing(&x, &[6, 0, 0], &[5, 5, 5]).is_err());
    assert!(logistic_crossing(&x[..1], &[1], &[1]).is_err());
}

#[test]
fn effective_length_and_blur() {
    assert_eq!(effective_length(0.5), 40);
    assert_eq!(effective_length(0.1), 12);
    assert_eq!(effective_length(0.0), 1);
    for s in [0.1, 0.3, 0.5, 0.8, -0.6] {
        let a = geometric_blur(s).unwrap();
        assert_eq!(a.len(), effective_length(s));
        let a_inv = Filter::new(0, vec![1.0, -s]).unwrap();
        let tail = s.abs().powi(a.len() as i32);
        assert!(tail <= 1e-12 * (1.0 + 1e-12));
        assert!((inverse_error(&a, &a_inv) - tail).abs() < 1e-15);
    }
}

#[test]
fn workers_env_fallback() {
    assert_eq!(resolve_workers(Some(3)), Some(3));
}

#[test]
fn phase_rows_straddling_transition_are_rank_ordered() {
    let spec = PhaseGridSpec {
        p_values: (7..=13).map(|i| i as f64 * 0.05).collect(),
        s_values: vec![0.5],
        trials: 20,
        seed: 1,
        ..Default::default()
    };
    let d = phase_diagram(&spec, None).unwrap();
    let rho = d.boundary.f64_column("spearman").unwrap()[0];
    assert!(rho <= -0.9, "{rho}");
    let p_hat = d.boundary.f64_column("p_hat").unwrap()[0];
    assert!((p_hat - 0.5).abs() <= 0.07, "{p_hat}");
    assert_eq!(d.grid.rows(), 7);
    let rates = d.grid.f64_column("success_rate").unwrap();
    assert!(rates[0] > rates[6]);
}

#[test]
fn phase_output_is_independent_of_worker_count() {
    let spec = PhaseGridSpec {
        p_values: vec![0.2, 0.6],
        s_values: vec![0.2, 0.6],
        t_half: 50,
        trials: 3,
        seed: 9,
        ..Default::default()
    };
    let a = phase_diagram(&spec, Some(1)).unwrap();
    let b = phase_diagram(&spec, Some(3)).unwrap();
    assert_eq!(a.grid.to_csv_string().unwrap(), b.grid.to_csv_string().unwrap());
    assert_eq!(a.boundary.to_csv_string().unwrap(), b.boundary.to_csv_string().unwrap());
    assert_eq!(a.grid.meta.seed, 9);
}

#[test]
fn stability_small_run() {
    let spec = StabilitySpec {
        roots: RootFactorization::real(&[], &[0.5], Gain::Fixed(1.0)).unwrap(),
        r_values: vec![2, 4, 6],
        p: 0.1,
        t_half: 200,
        trials: 2,
        seed: 1,
        solver: SolverConfig::default(),
    };
    let t = stability_curve(&spec, Some(1)).unwrap();
    let c = t.f64_column("constructed_error").unwrap();
    let direct = t.f64_column("constructed_error_direct").unwrap();
    for (i, r) in [2, 4, 6].iter().enumerate() {
        assert!((c[i] - 0.5f64.powi(*r)).abs() < 1e-14);
        assert!((direct[i] - c[i]).abs() < 1e-14);
    }
    assert!(t.meta.summary["log_slope"].as_f64().unwrap() < 0.0);
    assert!(t.meta.summary["reference_log_slope"].as_f64().unwrap() == 0.5f64.ln());
}

#[test]
fn robustness_small_runs() {
    for kind in [NoiseKind::Gaussian, NoiseKind::Adversarial] {
        let spec = RobustnessSpec {
            kind,
            levels: vec![0.0, 0.1, 0.2],
            trials: 2,
            t_half: 150,
            mc_samples: 1000,
            seed: 2,
            ..Default::default()
        };
        let t = robustness_curve(&spec, Some(1)).unwrap();
        assert_eq!(t.rows(), 3);
        let bound = t.f64_column("bound").unwrap();
        assert_eq!(bound[0], 0.0);
        assert!(bound[1] < bound[2]);
        let err = t.f64_column("median_error").unwrap();
        assert!(err[0] < 1e-6, "{err:?}");
        let eps = t.meta.summary["bilipschitz_estimate"].as_f64().unwrap();
        assert!((eps - 0.1 * 0.9).abs() < 1e-9, "{eps}");
    }
    let bad = RobustnessSpec { levels: vec![-0.1], ..Default::default() };
    assert!(robustness_curve(&bad, Some(1)).is_err());
}

#[test]
fn sample_complexity_small_run() {
    let spec = SampleComplexitySpec {
        k_values: vec![2, 4],
        n_values: vec![3, 40, 160],
        trials: 5,
        seed: 3,
        ..Default::default()
    };
    let a = sample_complexity_curve(&spec, Some(1)).unwrap();
    let b = sample_complexity_curve(&spec, Some(2)).unwrap();
    assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    let s = a.u64_column("successes").unwrap();
    assert_eq!(s[0], 0);
    assert!(s[2] >= 4 && s[5] >= 4, "{s:?}");
    assert_eq!(a.meta.summary["n90"].as_array().unwrap().len(), 2);
}

#[test]
fn table_files() {
    let mut t = ExperimentTable::new("demo", &serde_json::json!({"x": 1}), 4).unwrap();
    t.push("a", Column::F64(vec![0.25, 1.5])).unwrap();
    t.push("b", Column::U64(vec![1, 2])).unwrap();
    t.push("c", Column::I64(vec![-1, 3])).unwrap();
    assert!(t.push("d", Column::U64(vec![1])).is_err());
    assert_eq!(t.to_csv_string().unwrap(), "a,b,c\n0.25,1,-1\n1.5,2,3\n");
    let dir = tempfile::tempdir().unwrap();
    let (csv, meta) = t.write_to(dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), t.to_csv_string().unwrap());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&meta).unwrap()).unwrap();
    assert_eq!(m["kind"], "demo");
    assert_eq!(m["seed"], 4);
    let stem = t.file_stem().unwrap();
    assert!(stem.starts_with("demo-") && stem.len() == "demo-".len() + 12);
    let other = ExperimentTable::new("demo", &serde_json::json!({"x": 2}), 4).unwrap();
    assert_ne!(other.file_stem().unwrap(), stem);
}
