//! Quick invariant suite behind the `selftest` command.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::*;
use crate::filters::{truncated_inverse_error_sq, Gain, RootFactorization};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub seed: u64,
    pub checks: Vec<SelftestCheck>,
}

fn random_filter<R: Rng>(rng: &mut R, max_len: usize) -> Filter {
    loop {
        let n = rng.random_range(1..=max_len);
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(f) = Filter::new(0, c) {
            if !f.is_zero() {
                return f;
            }
        }
    }
}

/// Composite Simpson rule on `[-12, 12]` for `E|μ + σG|`.
fn folded_by_quadrature(mu: f64, sigma: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let g = |t: f64| (mu + sigma * t).abs() * (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    let mut s = g(a) + g(b);
    for i in 1..n {
        let t = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * g(t) } else { 2.0 * g(t) };
    }
    s * h / 3.0
}

type Check = Result<(bool, String)>;

fn v2_identity(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 100);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let psi = random_filter(&mut rng, 12);
        let p = rng.random_range(0.05..0.95);
        let e = v_landscape_mc(&psi, p, 2, 20_000, seed + i)?.estimate;
        worst = worst.max((e.mean - p).abs() / e.stderr.max(1e-300));
    }
    Ok((worst <= 3.5, format!("max |V2 - p| / stderr = {worst:.3}")))
}

fn gaussian_reduction(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 101);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let psi = random_filter(&mut rng, 8);
        let p = rng.random_range(0.05..0.95);
        let exact = expected_abs_inner(&psi, p, Mode::Exact)?.mean;
        let mc = direct_abs_inner_mc(&psi, p, 20_000, seed + i)?;
        worst = worst.max((mc.mean - exact).abs() / mc.stderr.max(1e-300));
    }
    Ok((worst <= 3.5, format!("max deviation = {worst:.3} stderr")))
}

fn folded_quadrature(_: u64) -> Check {
    let mut worst: f64 = 0.0;
    for &mu in &[-3.0, -0.5, 0.0, 1.0, 2.5] {
        for &sigma in &[0.2, 1.0, 2.5] {
            worst = worst.max((folded_gaussian_mean(mu, sigma)? - folded_by_quadrature(mu, sigma)).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max abs error = {worst:.2e}")))
}

fn v1_bounds(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 102);
    let mut ok = true;
    for _ in 0..50 {
        let psi = random_filter(&mut rng, 10);
        let p = rng.random_range(0.05..0.95);
        let v1 = support_expectation(psi.coeffs(), p, Mode::Exact, f64::sqrt)?.mean / psi.norm_l2();
        ok &= p - 1e-12 <= v1 && v1 <= p.sqrt() + 1e-12;
    }
    Ok((ok, "p <= V1 <= sqrt(p) on 50 random filters".into()))
}

fn saddles(_: u64) -> Check {
    let p = 0.3;
    let m2 = p * (2f64.sqrt() + (1.0 - 2f64.sqrt()) * p);
    let ok = (v1_saddle(1, p)? - p).abs() < 1e-15
        && (v1_saddle(2, p)? - m2).abs() < 1e-15
        && (v2k_saddle(100, p, 1)? - p).abs() < 1e-12;
    Ok((ok, "M = 1, 2 and the V2 saddle".into()))
}

fn bilipschitz_sweep(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 103);
    let mut ok = true;
    for _ in 0..50 {
        let b = random_filter(&mut rng, 8).shift(rng.random_range(-3..=0));
        let b = b.scale(1.0 / b.norm_l2());
        let (p, t) = (rng.random_range(0.01..0.99), rng.random_range(1e-3..1.0));
        let g = bilipschitz_gap(p, t, &b, Mode::Exact)?;
        ok &= g.gap.mean >= -1e-9 && g.gap.mean <= g.bound;
    }
    Ok((ok, "0 <= gap <= pt/2 on 50 random directions".into()))
}

fn threshold_ordering(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 104);
    let mut ok = true;
    for _ in 0..10 {
        let e = random_filter(&mut rng, 4);
        let r = pt_exact(&e, 1e-6, &ThresholdBudget::default())?;
        if let Some(x) = r.exact {
            ok &= r.lower - 1e-3 <= x && x <= r.upper + 1e-3;
        }
    }
    Ok((ok, "lower <= exact <= upper on 10 random initializations".into()))
}

fn single_root_inverse(_: u64) -> Check {
    let rf = RootFactorization::real(&[], &[0.5], Gain::Fixed(1.0))?;
    let mut worst: f64 = 0.0;
    for r in 1..=20 {
        worst = worst.max((truncated_inverse_error_sq(&rf, r)? - 0.25f64.powi(r as i32)).abs());
    }
    Ok((worst <= 1e-12, format!("max error = {worst:.2e}")))
}

pub fn selftest(seed: u64) -> SelftestReport {
    let suite: [(&str, fn(u64) -> Check); 8] = [
        ("v2_identity", v2_identity),
        ("gaussian_reduction", gaussian_reduction),
        ("folded_quadrature", folded_quadrature),
        ("v1_bounds", v1_bounds),
        ("saddle_values", saddles),
        ("bilipschitz_gap", bilipschitz_sweep),
        ("threshold_ordering", threshold_ordering),
        ("single_root_inverse", single_root_inverse),
    ];
    let checks: Vec<SelftestCheck> = suite
        .iter()
        .map(|(name, run)| {
            let (passed, detail) = run(seed).unwrap_or_else(|e| (false, e.to_string()));
            SelftestCheck {
                name: (*name).into(),
                passed,
                detail,
            }
        })
        .collect();
    SelftestReport {
        passed: checks.iter().all(|c| c.passed),
        seed,
        checks,
    }
}
