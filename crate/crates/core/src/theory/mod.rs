//! Population theory of the l1 program under Bernoulli(p)-Gaussian inputs.
//!
//! Almost everything reduces to expectations over a random support `I`
//! (each index kept independently with probability `p`) of a function of
//! `‖ψ_I‖₂`. [`support_expectation`] evaluates those either by enumerating all
//! supports (up to [`EXACT_LIMIT`] nonzero entries) or by sampling masks.

mod selftest;
mod threshold;

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filters::{convolve, wiener_margin, Filter};
use crate::signals::{linear_process, sample_bg, stream_rng, BgModel, Window};

pub use selftest::{selftest, SelftestCheck, SelftestReport};
pub use threshold::{
    kkt_witness, pt_exact, pt_lower, pt_upper, ThresholdBudget, ThresholdReport, ThresholdStatus,
};

/// Largest number of nonzero entries handled by exhaustive enumeration.
pub const EXACT_LIMIT: usize = 20;

/// `√(2/π)`, the mean of `|G|` for a standard normal `G`.
pub const HALF_NORMAL_MEAN: f64 = FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    /// `None` for exact enumeration.
    pub seed: Option<u64>,
}

impl McEstimate {
    pub fn exact(mean: f64, samples: u64) -> Self {
        Self {
            mean,
            stderr: 0.0,
            samples,
            seed: None,
        }
    }

    fn from_samples(sum: f64, sum_sq: f64, n: u64, seed: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / nf).sqrt(),
            samples: n,
            seed: Some(seed),
        }
    }

    /// `|mean − target| ≤ k·stderr + slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

impl Mode {
    /// Exact when `n ≤ EXACT_LIMIT`, otherwise sampled.
    pub fn auto(n: usize, samples: u64, seed: u64) -> Self {
        if n <= EXACT_LIMIT {
            Mode::Exact
        } else {
            Mode::MonteCarlo { samples, seed }
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p = {p} must lie in [0, 1]")));
    }
    Ok(())
}

/// `E_I f(‖v_I‖₂²)` over Bernoulli(p) supports `I`.
pub fn support_expectation<F: Fn(f64) -> f64>(vals: &[f64], p: f64, mode: Mode, f: F) -> Result<McEstimate> {
    let v: Vec<f64> = vals.iter().copied().filter(|&x| x != 0.0).collect();
    expectation_with_first(&v, p, mode, |q, _| f(q))
}

/// Like [`support_expectation`] on `v` as given, also telling `f` whether
/// `v[0]` was drawn into the support.
fn expectation_with_first<F: Fn(f64, bool) -> f64>(v: &[f64], p: f64, mode: Mode, f: F) -> Result<McEstimate> {
    check_p(p)?;
    let n = v.len();
    match mode {
        Mode::Exact => {
            if n > EXACT_LIMIT {
                return Err(Error::EnumerationTooLarge {
                    support: n,
                    limit: EXACT_LIMIT,
                });
            }
            let weights: Vec<f64> = (0..=n)
                .map(|k| p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
                .collect();
            let size = 1usize << n;
            let mut sq = vec![0.0; size];
            let mut total = f(0.0, false) * weights[0];
            for mask in 1..size {
                let low = mask.trailing_zeros() as usize;
                sq[mask] = sq[mask & (mask - 1)] + v[low] * v[low];
                total += weights[mask.count_ones() as usize] * f(sq[mask], mask & 1 == 1);
            }
            Ok(McEstimate::exact(total, size as u64))
        }
        Mode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("Monte Carlo needs at least one sample"));
            }
            let mut rng = stream_rng(seed, 0);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..samples {
                let mut q = 0.0;
                let mut first = false;
                for (i, &x) in v.iter().enumerate() {
                    if rng.random::<f64>() < p {
                        q += x * x;
                        first |= i == 0;
                    }
                }
                let fx = f(q, first);
                s += fx;
                s2 += fx * fx;
            }
            Ok(McEstimate::from_samples(s, s2, samples, seed))
        }
    }
}

/// `E_I‖ψ_I‖₂ − E_I‖(e₀)_I‖₂`, the population objective of `ψ` above that of
/// `e₀`. Both terms share each sampled support.
pub fn objective_gap(psi: &Filter, p: f64, mode: Mode) -> Result<McEstimate> {
    nonzero(psi)?;
    let (b0, rest) = split_at_zero(psi);
    let mut v = vec![b0];
    v.extend(rest);
    expectation_with_first(&v, p, mode, |q, first| q.sqrt() - if first { 1.0 } else { 0.0 })
}

fn nonzero(psi: &Filter) -> Result<()> {
    if psi.is_zero() {
        Err(Error::ZeroFilter)
    } else {
        Ok(())
    }
}

/// `E|Σ ψᵢ Xᵢ| = √(2/π)·E_I‖ψ_I‖₂` for Bernoulli(p)-Gaussian `X`.
pub fn expected_abs_inner(psi: &Filter, p: f64, mode: Mode) -> Result<McEstimate> {
    nonzero(psi)?;
    let mut e = support_expectation(psi.coeffs(), p, mode, f64::sqrt)?;
    e.mean *= HALF_NORMAL_MEAN;
    e.stderr *= HALF_NORMAL_MEAN;
    Ok(e)
}

/// Samples `|Σ ψᵢ Xᵢ|` directly with Bernoulli-Gaussian `X`.
pub fn direct_abs_inner_mc(psi: &Filter, p: f64, samples: u64, seed: u64) -> Result<McEstimate> {
    nonzero(psi)?;
    let model = BgModel::new(p, seed)?;
    if samples == 0 {
        return Err(invalid("Monte Carlo needs at least one sample"));
    }
    let mut rng = stream_rng(seed, 1);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let v: f64 = psi.coeffs().iter().map(|c| c * model.draw(&mut rng)).sum::<f64>().abs();
        s += v;
        s2 += v * v;
    }
    Ok(McEstimate::from_samples(s, s2, samples, seed))
}

fn ln_choose(n: usize, k: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `Σ_j C(M,j) p^j (1−p)^{M−j} g(j)`.
fn binomial_sum(m: usize, p: f64, g: impl Fn(usize) -> f64) -> f64 {
    if p <= 0.0 {
        return g(0);
    }
    if p >= 1.0 {
        return g(m);
    }
    if m <= 60 {
        let mut c = 1.0;
        let mut s = 0.0;
        for j in 0..=m {
            s += c * p.powi(j as i32) * (1.0 - p).powi((m - j) as i32) * g(j);
            c = c * (m - j) as f64 / (j + 1) as f64;
        }
        s
    } else {
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        (0..=m)
            .map(|j| (ln_choose(m, j) + j as f64 * lp + (m - j) as f64 * lq).exp() * g(j))
            .sum()
    }
}

/// `V₁` at an equal-magnitude point with `M` nonzero entries.
pub fn v1_saddle(m: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    Ok(binomial_sum(m, p, |j| (j as f64 / m as f64).sqrt()))
}

/// `V₂ₖ` at an equal-magnitude point with `M` nonzero entries.
pub fn v2k_saddle(m: usize, p: f64, k: u32) -> Result<f64> {
    check_p(p)?;
    if m == 0 || k == 0 {
        return Err(invalid("M and k must be at least 1"));
    }
    Ok(binomial_sum(m, p, |j| (j as f64 / m as f64).powi(k as i32)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeEstimate {
    pub estimate: McEstimate,
    /// Draws with an empty support, discarded when `k < 0`.
    pub rejected: u64,
    pub rejection_rate: f64,
}

/// Monte Carlo `V_k(ψ) = E_I‖ψ_I‖^k / ‖ψ‖^k`. For `k < 0` the expectation is
/// conditional on `ψ_I ≠ 0`; `samples` counts accepted draws.
pub fn v_landscape_mc(psi: &Filter, p: f64, k: i32, samples: u64, seed: u64) -> Result<LandscapeEstimate> {
    nonzero(psi)?;
    check_p(p)?;
    if samples == 0 {
        return Err(invalid("Monte Carlo needs at least one sample"));
    }
    if k < 0 && p == 0.0 {
        return Err(invalid("negative moments need p > 0"));
    }
    let norm2 = psi.norm_l2().powi(2);
    let v: Vec<f64> = psi.coeffs().iter().copied().filter(|&x| x != 0.0).collect();
    let mut rng = stream_rng(seed, 2);
    let (mut s, mut s2) = (0.0, 0.0);
    let (mut accepted, mut rejected) = (0u64, 0u64);
    while accepted < samples {
        let mut q = 0.0;
        for &x in &v {
            if rng.random::<f64>() < p {
                q += x * x;
            }
        }
        if k < 0 && q == 0.0 {
            rejected += 1;
            continue;
        }
        let val = (q / norm2).powf(k as f64 / 2.0);
        s += val;
        s2 += val * val;
        accepted += 1;
    }
    Ok(LandscapeEstimate {
        estimate: McEstimate::from_samples(s, s2, accepted, seed),
        rejected,
        rejection_rate: rejected as f64 / (accepted + rejected) as f64,
    })
}

/// `E|μ + σG|` for standard normal `G`.
pub fn folded_gaussian_mean(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(mu.abs());
    }
    let z = mu / sigma;
    Ok(HALF_NORMAL_MEAN * sigma * (-0.5 * z * z).exp() + mu * libm::erf(z / SQRT_2))
}

/// `R(γ) = √(π/2)·E|γ + G|`, the folded mean relative to the half-normal mean.
pub fn folded_ratio(gamma: f64) -> f64 {
    (-0.5 * gamma * gamma).exp() + (PI / 2.0).sqrt() * gamma * libm::erf(gamma / SQRT_2)
}

/// Splits `β` into its value at 0 and the remaining entries.
fn split_at_zero(beta: &Filter) -> (f64, Vec<f64>) {
    let b0 = beta.get(0);
    let rest = beta
        .support()
        .filter(|&i| i != 0)
        .map(|i| beta.get(i))
        .filter(|&v| v != 0.0)
        .collect();
    (b0, rest)
}

/// Directional derivative at `e₀` of `E_I‖w_I‖₂` along `β`:
/// `p·β₀ + (1−p)·E_I‖β'_I‖₂` where `β'` drops index 0.
pub fn kkt_directional(beta: &Filter, p: f64, mode: Mode) -> Result<McEstimate> {
    nonzero(beta)?;
    let (b0, rest) = split_at_zero(beta);
    let mut e = support_expectation(&rest, p, mode, f64::sqrt)?;
    e.mean = p * b0 + (1.0 - p) * e.mean;
    e.stderr *= 1.0 - p;
    Ok(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzGap {
    /// Finite difference quotient minus the directional derivative.
    pub gap: McEstimate,
    /// `p·t/2`.
    pub bound: f64,
}

/// `(E_I‖(e₀+tβ)_I‖ − E_I‖(e₀)_I‖)/t` minus [`kkt_directional`], for unit `β`.
pub fn bilipschitz_gap(p: f64, t: f64, beta: &Filter, mode: Mode) -> Result<BiLipschitzGap> {
    nonzero(beta)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t must be positive"));
    }
    if (beta.norm_l2() - 1.0).abs() > 1e-9 {
        return Err(invalid("beta must have unit l2 norm"));
    }
    let (b0, rest) = split_at_zero(beta);
    // only supports containing 0 contribute; written without cancellation
    let f = |q: f64| {
        let num = 2.0 * b0 + t * (b0 * b0 + q);
        let root = ((1.0 + t * b0).powi(2) + t * t * q).sqrt();
        num / (1.0 + root) - b0
    };
    let mut gap = support_expectation(&rest, p, mode, f)?;
    gap.mean *= p;
    gap.stderr *= p;
    Ok(BiLipschitzGap {
        gap,
        bound: p * t / 2.0,
    })
}

fn margin_grid(a: &Filter) -> usize {
    (8 * a.len()).next_power_of_two().max(4096)
}

/// `μ_min = λ_m(a)·√(p/k)·‖w‖₁ / (√2·π)`.
pub fn mu_min(a: &Filter, p: f64, k: usize, w_l1: f64) -> Result<f64> {
    check_p(p)?;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let lm = wiener_margin(a, margin_grid(a))?.min;
    if lm <= 1e-12 {
        return Err(invalid("filter is not invertible (its transform vanishes)"));
    }
    Ok(lm * (p / k as f64).sqrt() * w_l1 / (SQRT_2 * PI))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuMinCheck {
    pub bound: f64,
    pub min_observed: f64,
    pub trials: usize,
    pub holds: bool,
}

/// Draws random unit-l1 filters `w` on `0..k` and compares `(1/N)‖w⋆a⋆X‖₁`
/// with [`mu_min`].
pub fn mu_min_check(a: &Filter, p: f64, k: usize, n: usize, trials: usize, seed: u64) -> Result<MuMinCheck> {
    let bound = mu_min(a, p, k, 1.0)?;
    let model = BgModel::new(p, seed)?;
    let total = n + a.len() + k;
    let x = sample_bg(&model, 0..total as i64, 0)?;
    let y = linear_process(a, &x)?;
    let mut rng = stream_rng(seed, 3);
    let mut min_observed = f64::INFINITY;
    for _ in 0..trials {
        let c: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let w = Filter::new(0, c)?;
        if w.is_zero() {
            continue;
        }
        let w = w.scale(1.0 / w.norm_l1());
        let v = linear_process(&w, &y)?;
        let obs = v.values.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
        min_observed = min_observed.min(obs);
    }
    Ok(MuMinCheck {
        bound,
        min_observed,
        trials,
        holds: min_observed >= bound,
    })
}

/// Objective gap bound under moving-average Gaussian noise of level `σ`.
pub fn gaussian_noise_bound(p: f64, sigma: f64) -> Result<f64> {
    check_p(p)?;
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be nonnegative"));
    }
    Ok((1.0 - p) * sigma + p * ((1.0 + sigma * sigma).sqrt() - 1.0))
}

/// Objective gap bound under a constant adversarial offset `η`.
pub fn adversarial_noise_bound(p: f64, eta: f64) -> Result<f64> {
    check_p(p)?;
    if !(eta >= 0.0) {
        return Err(invalid("eta must be nonnegative"));
    }
    Ok(p * HALF_NORMAL_MEAN * (folded_ratio(eta) - 1.0) + (1.0 - p) * eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMetrics {
    /// `‖a⋆w − e₀‖₂`
    pub d_psi2: f64,
    /// `‖w − a⁻¹‖₂`
    pub d_w2: f64,
    /// `(1/N)‖w⋆y − x‖₁`
    pub d_x1: f64,
    /// `((1/N)‖w⋆y − x‖₂²)^{1/2}`
    pub d_x2: f64,
}

/// Recovery metrics; the signal metrics use the valid region of `w⋆y`, all of
/// which must be covered by `x`.
pub fn distance_metrics(w: &Filter, a: &Filter, a_inv: &Filter, x: &Window, y: &Window) -> Result<DistanceMetrics> {
    let d_psi2 = convolve(a, w).sub(&Filter::delta(0)).norm_l2();
    let d_w2 = w.sub(a_inv).norm_l2();
    let v = linear_process(w, y)?;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (t, vt) in v.range().zip(&v.values) {
        let xt = x.get(t).ok_or_else(|| {
            Error::InsufficientMargin(format!("x does not cover output index {t}"))
        })?;
        s1 += (vt - xt).abs();
        s2 += (vt - xt).powi(2);
    }
    let n = v.len() as f64;
    Ok(DistanceMetrics {
        d_psi2,
        d_w2,
        d_x1: s1 / n,
        d_x2: (s2 / n).sqrt(),
    })
}
