mod common;

use proptest::prelude::*;
use sparse_deconv::filters::convolve;
use sparse_deconv::signals::{
    add_adversarial_offset, add_ma_gaussian, derive_seed, linear_process, observe, read_window, read_window_bin,
    sample_bg, source_range, write_window_bin, write_window_json,
};
use sparse_deconv::{BgModel, Filter, Window};

#[test]
fn sampling_is_reproducible_and_stream_separated() {
    let m = BgModel::new(0.3, 42).unwrap();
    let a = sample_bg(&m, -50..50, 0).unwrap();
    assert_eq!(a, sample_bg(&m, -50..50, 0).unwrap());
    assert_ne!(a, sample_bg(&m, -50..50, 1).unwrap());
    assert_ne!(a, sample_bg(&BgModel::new(0.3, 43).unwrap(), -50..50, 0).unwrap());
    assert_eq!(a.range(), -50..50);
}

#[test]
fn activity_rate_and_variance() {
    let p = 0.2;
    let x = sample_bg(&BgModel::new(p, 7).unwrap(), 0..200_000, 0).unwrap();
    let n = x.len() as f64;
    let active = x.values.iter().filter(|v| **v != 0.0).count() as f64 / n;
    let var = x.values.iter().map(|v| v * v).sum::<f64>() / n;
    let se = (p * (1.0 - p) / n).sqrt();
    assert!((active - p).abs() < 4.0 * se, "{active}");
    assert!((var - p).abs() < 0.01, "{var}");
}

#[test]
fn model_rejects_bad_p() {
    assert!(BgModel::new(0.0, 0).is_err());
    assert!(BgModel::new(1.5, 0).is_err());
    assert!(BgModel::new(1.0, 0).is_ok());
}

#[test]
fn derived_seeds_are_distinct() {
    let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(5, i)).collect();
    assert_eq!(seeds.len(), 10_000);
    assert_ne!(derive_seed(5, 0), derive_seed(6, 0));
}

proptest! {
    #[test]
    fn linear_process_is_valid_part_of_convolution(
        offset in -5i64..5,
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..6),
        start in -20i64..20,
        values in prop::collection::vec(-3.0f64..3.0, 6..40),
    ) {
        let a = Filter::new(offset, coeffs).unwrap();
        prop_assume!(!a.is_zero());
        let x = Window::new(start, values.clone()).unwrap();
        let y = linear_process(&a, &x).unwrap();
        let full = common::naive_convolve(&a, &Filter::new(start, values).unwrap());
        prop_assert_eq!(y.start, x.start + a.end());
        prop_assert_eq!(y.len(), x.len() - a.len() + 1);
        for t in y.range() {
            let want = full.get(&t).copied().unwrap_or(0.0);
            prop_assert!((y.get(t).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn observe_covers_requested_range(
        offset in -4i64..4,
        len in 1usize..6,
        lo in -50i64..50,
        n in 1i64..60,
        seed in 0u64..1000,
    ) {
        let mut rng = common::rng(seed);
        let a = common::random_filter(&mut rng, offset, len);
        let model = BgModel::new(0.4, seed).unwrap();
        let obs = observe(&a, &model, lo..lo + n, 0).unwrap();
        prop_assert_eq!(obs.y.range(), lo..lo + n);
        prop_assert_eq!(obs.x.range(), source_range(&a, lo..lo + n));
        let x = Filter::new(obs.x.start, obs.x.values.clone()).unwrap();
        let full = convolve(&a, &x);
        for t in obs.y.range() {
            prop_assert!((obs.y.get(t).unwrap() - full.get(t)).abs() < 1e-10);
        }
    }
}

#[test]
fn ma_noise_has_requested_level() {
    let x = Window::new(0, vec![0.0; 100_000]).unwrap();
    let b = Filter::new(0, vec![1.0, 1.0]).unwrap();
    let noisy = add_ma_gaussian(&x, 0.5, &b, 3, 0).unwrap();
    assert!(noisy.renormalized);
    let v = &noisy.window.values;
    let var = v.iter().map(|z| z * z).sum::<f64>() / v.len() as f64;
    assert!((var - 0.25).abs() < 0.01, "{var}");
    // lag-one correlation of (G_t + G_{t-1}) / √2 is 1/2
    let lag1 = v.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (v.len() - 1) as f64;
    assert!((lag1 / var - 0.5).abs() < 0.02, "{}", lag1 / var);

    let same = add_ma_gaussian(&x, 0.0, &Filter::delta(0), 3, 0).unwrap();
    assert_eq!(same.window, x);
    assert!(!same.renormalized);
    assert!(add_ma_gaussian(&x, -1.0, &b, 3, 0).is_err());
    assert!(add_ma_gaussian(&x, 1.0, &Filter::zero(), 3, 0).is_err());
}

#[test]
fn adversarial_offset_is_constant() {
    let x = Window::new(-2, vec![1.0, -1.0, 0.0]).unwrap();
    let y = add_adversarial_offset(&x, 0.25).unwrap();
    assert_eq!(y.values, vec![1.25, -0.75, 0.25]);
    assert!(add_adversarial_offset(&x, -0.1).is_err());
}

#[test]
fn window_slicing() {
    let w = Window::new(-3, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(w.end(), 1);
    assert_eq!(w.slice(-2..0).unwrap().values, vec![2.0, 3.0]);
    assert!(w.slice(-4..0).is_err());
    assert!(w.slice(0..0).is_err());
    assert_eq!(w.get(1), None);
    assert!(Window::new(0, vec![]).is_err());
    assert!(serde_json::from_str::<Window>(r#"{"start":0,"values":[]}"#).is_err());
}

#[test]
fn window_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = sample_bg(&BgModel::new(0.5, 1).unwrap(), -7..30, 0).unwrap();
    let json = dir.path().join("w.json");
    let bin = dir.path().join("w.bin");
    write_window_json(&json, &w).unwrap();
    write_window_bin(&bin, &w).unwrap();
    assert_eq!(read_window(&json).unwrap(), w);
    assert_eq!(read_window_bin(&bin).unwrap(), w);
    assert_eq!(read_window(&bin).unwrap(), w);
}
