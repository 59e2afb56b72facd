//! Phase-transition thresholds for a normalized initialization `ẽ`.
//!
//! With `ẽ` shifted and scaled so its peak is `1` at index 0, write `c` for the
//! sorted magnitudes of the remaining entries. The threshold `p⋆` solves
//! `p/(1−p) = val(p)`, where
//!
//! ```text
//! val(p) = min { E_J ‖β_J‖₂ : β ≥ 0, ⟨c, β⟩ = 1 }
//! ```
//!
//! and `J` is a Bernoulli(p) support. The minimum is taken separately over the
//! leading `m` entries of `c` for each `m` up to a cap. Bisection runs on
//! `h(p) = 1/(1−p) − val(p)/p`, which is increasing in `p`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{kkt_directional, Mode, EXACT_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::filters::{angle_to_delta, deltaness, Filter};
use crate::signals::stream_rng;

/// `1 − Δ(ẽ)`.
pub fn pt_upper(e_tilde: &Filter) -> Result<f64> {
    Ok(1.0 - deltaness(e_tilde)?)
}

/// `max(0, 1 − tan∠(ẽ, e₀))`.
pub fn pt_lower(e_tilde: &Filter) -> Result<f64> {
    Ok((1.0 - angle_to_delta(e_tilde)?.tan).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdBudget {
    /// Largest leading support size `m` examined.
    pub support_cap: usize,
    /// Random starting points per support size, on top of the fixed ones.
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ThresholdBudget {
    fn default() -> Self {
        Self {
            support_cap: 12,
            restarts: 2,
            max_iters: 3000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStatus {
    /// Bisection converged on a monotone bracket.
    Converged,
    /// `ẽ` is a scaled delta; every `p` succeeds.
    Trivial,
    /// `h` did not change sign on the bracket; only the bounds are reported.
    BracketFailure,
    /// Bisection converged but `h` was not monotone on the sampled bracket.
    NonMonotone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub lower: f64,
    pub upper: f64,
    pub exact: Option<f64>,
    /// Leading support size attaining the minimum at `exact`.
    pub support_argmin: Option<usize>,
    pub status: ThresholdStatus,
    pub bracket: [f64; 2],
    /// `min_m cot∠(ẽ_{S_m}, e₀)·V₁(ẽ'_{S_m})` at `exact`, for comparison.
    pub product_form: Option<f64>,
}

/// Expectation of `‖β_J‖₂` and its gradient by enumeration of all supports.
struct Enumerator {
    m: usize,
    weights: Vec<f64>,
}

impl Enumerator {
    fn new(m: usize, p: f64) -> Self {
        let weights = (0..=m)
            .map(|k| p.powi(k as i32) * (1.0 - p).powi((m - k) as i32))
            .collect();
        Self { m, weights }
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let size = 1usize << self.m;
        let mut sq = vec![0.0; size];
        let mut total = 0.0;
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            sq[mask] = sq[mask & (mask - 1)] + beta[low] * beta[low];
            total += self.weights[mask.count_ones() as usize] * sq[mask].sqrt();
        }
        total
    }

    fn value_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let size = 1usize << self.m;
        let mut sq = vec![0.0; size];
        let mut total = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            sq[mask] = sq[mask & (mask - 1)] + beta[low] * beta[low];
            let k = mask.count_ones();
            let w = self.weights[k as usize];
            let norm = sq[mask].sqrt();
            total += w * norm;
            let mut bits = mask;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                // one-sided derivative when the whole restriction vanishes
                grad[i] += if norm > 0.0 { w * beta[i] / norm } else { w / (k as f64).sqrt() };
                bits &= bits - 1;
            }
        }
        total
    }
}

/// Euclidean projection onto `{β ≥ 0, ⟨c, β⟩ = 1}` for positive `c`.
fn project(v: &[f64], c: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| (v[b] / c[b]).total_cmp(&(v[a] / c[a])));
    let (mut scv, mut scc) = (0.0, 0.0);
    let mut tau = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        scv += c[i] * v[i];
        scc += c[i] * c[i];
        tau = (scv - 1.0) / scc;
        let next = idx.get(k + 1).map(|&j| v[j] / c[j]);
        if next.is_none_or(|r| tau >= r) {
            break;
        }
    }
    v.iter().zip(c).map(|(vi, ci)| (vi - tau * ci).max(0.0)).collect()
}

/// Projected gradient descent with backtracking from each start; returns the
/// best value and point.
fn minimize(en: &Enumerator, c: &[f64], starts: &[Vec<f64>], max_iters: usize) -> (f64, Vec<f64>) {
    let m = c.len();
    let mut best = (f64::INFINITY, vec![0.0; m]);
    let mut grad = vec![0.0; m];
    for start in starts {
        let mut beta = project(start, c);
        let mut f = en.value_grad(&beta, &mut grad);
        let mut step = 1.0 / grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-300);
        let mut stalls = 0;
        for _ in 0..max_iters {
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
                let cand = project(&trial, c);
                let mut lin = 0.0;
                let mut dist = 0.0;
                for i in 0..m {
                    let d = cand[i] - beta[i];
                    lin += grad[i] * d;
                    dist += d * d;
                }
                if dist == 0.0 {
                    break;
                }
                let fc = en.value(&cand);
                if fc <= f + lin + dist / (2.0 * step) {
                    let drop = f - fc;
                    beta = cand;
                    f = en.value_grad(&beta, &mut grad);
                    step *= 2.0;
                    accepted = true;
                    stalls = if drop <= 1e-13 * f { stalls + 1 } else { 0 };
                    break;
                }
                step *= 0.5;
            }
            if !accepted || stalls >= 3 {
                break;
            }
        }
        if f < best.0 {
            best = (f, beta);
        }
    }
    best
}

struct Landscape {
    c: Vec<f64>,
    signs: Vec<f64>,
    indices: Vec<i64>,
    budget: ThresholdBudget,
    warm: Vec<Option<Vec<f64>>>,
}

impl Landscape {
    fn new(e_tilde: &Filter, budget: &ThresholdBudget) -> Result<Self> {
        let e = e_tilde.peak_normalized()?;
        let mut entries: Vec<(i64, f64)> = e
            .support()
            .filter(|&i| i != 0)
            .map(|i| (i, e.get(i)))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        let cap = budget.support_cap.min(EXACT_LIMIT);
        entries.truncate(cap);
        Ok(Self {
            c: entries.iter().map(|e| e.1.abs()).collect(),
            signs: entries.iter().map(|e| e.1.signum()).collect(),
            indices: entries.iter().map(|e| e.0).collect(),
            budget: budget.clone(),
            warm: vec![None; entries.len()],
        })
    }

    /// `(val_m(p), minimizer)` for the leading `m` entries.
    fn val_m(&mut self, m: usize, p: f64) -> (f64, Vec<f64>) {
        let c = &self.c[..m];
        if m == 1 {
            return (p / c[0], vec![1.0 / c[0]]);
        }
        let en = Enumerator::new(m, p);
        let mut vertex = vec![0.0; m];
        vertex[0] = 1.0 / c[0];
        let mut starts = vec![vertex, vec![1.0; m], c.to_vec()];
        if let Some(w) = &self.warm[m - 1] {
            starts.push(w.clone());
        }
        let mut rng = stream_rng(self.budget.seed, m as u64);
        for _ in 0..self.budget.restarts {
            starts.push((0..m).map(|_| rng.random::<f64>()).collect());
        }
        let best = minimize(&en, c, &starts, self.budget.max_iters);
        self.warm[m - 1] = Some(best.1.clone());
        best
    }

    /// `(min_m val_m(p), argmin m, minimizer)`. Padding with zeros embeds
    /// each support in the next, so `val_m` is nonincreasing and the minimum
    /// sits at the largest `m`; the reported `m` is the minimizer's support.
    fn val(&mut self, p: f64) -> (f64, usize, Vec<f64>) {
        let m = self.c.len();
        let (v, beta) = self.val_m(m, p);
        let top = beta.iter().fold(0.0f64, |a, b| a.max(*b));
        let used = beta.iter().rposition(|&b| b > 1e-9 * top).map_or(1, |i| i + 1);
        (v, used, beta)
    }

    fn h(&mut self, p: f64) -> f64 {
        1.0 / (1.0 - p) - self.val(p).0 / p
    }

    fn product_form(&self, p: f64) -> f64 {
        (1..=self.c.len())
            .map(|m| {
                let c = &self.c[..m];
                Enumerator::new(m, p).value(c) / c.iter().map(|x| x * x).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Feasible direction `β = −e₀ + Σ sign(ẽ'ᵢ)·βᵢ e_{iᵢ}` in peak-normalized
    /// coordinates.
    fn direction(&self, beta: &[f64]) -> Result<Filter> {
        let lo = self.indices[..beta.len()].iter().copied().min().unwrap_or(0).min(0);
        let hi = self.indices[..beta.len()].iter().copied().max().unwrap_or(0).max(0);
        let mut coeffs = vec![0.0; (hi - lo + 1) as usize];
        coeffs[(-lo) as usize] = -1.0;
        for (k, b) in beta.iter().enumerate() {
            coeffs[(self.indices[k] - lo) as usize] = self.signs[k] * b;
        }
        Filter::new(lo, coeffs)
    }
}

/// Threshold report: closed-form bounds plus the bisection estimate.
/// `tol` is the bisection width.
pub fn pt_exact(e_tilde: &Filter, tol: f64, budget: &ThresholdBudget) -> Result<ThresholdReport> {
    if !(tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    if budget.support_cap == 0 {
        return Err(invalid("support_cap must be at least 1"));
    }
    let lower = pt_lower(e_tilde)?;
    let upper = pt_upper(e_tilde)?;
    let mut land = Landscape::new(e_tilde, budget)?;
    if land.c.is_empty() {
        return Ok(ThresholdReport {
            lower,
            upper,
            exact: Some(1.0),
            support_argmin: None,
            status: ThresholdStatus::Trivial,
            bracket: [1.0, 1.0],
            product_form: None,
        });
    }
    let mut lo = (lower - 0.01).max(1e-9);
    let mut hi = (upper + 0.01).min(1.0 - 1e-9);
    let bracket = [lo, hi];
    let (hlo, hhi) = (land.h(lo), land.h(hi));
    if !(hlo <= 0.0 && hhi >= 0.0) {
        return Ok(ThresholdReport {
            lower,
            upper,
            exact: None,
            support_argmin: None,
            status: ThresholdStatus::BracketFailure,
            bracket,
            product_form: None,
        });
    }
    let probes: Vec<f64> = (0..8).map(|i| lo + (hi - lo) * i as f64 / 7.0).collect();
    let hs: Vec<f64> = probes.iter().map(|&p| land.h(p)).collect();
    let monotone = hs.windows(2).all(|w| w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if land.h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let exact = 0.5 * (lo + hi);
    let (_, m, _) = land.val(exact);
    Ok(ThresholdReport {
        lower,
        upper,
        exact: Some(exact),
        support_argmin: Some(m),
        status: if monotone {
            ThresholdStatus::Converged
        } else {
            ThresholdStatus::NonMonotone
        },
        bracket,
        product_form: Some(land.product_form(exact)),
    })
}

/// The minimizing feasible direction at `p` and its directional derivative
/// `p·β₀ + (1−p)·E‖β'_I‖`. A negative value certifies that `e₀` is not a
/// population minimizer at this `p` for the peak-normalized `ẽ`.
pub fn kkt_witness(e_tilde: &Filter, p: f64, budget: &ThresholdBudget) -> Result<(Filter, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p must lie in (0, 1)"));
    }
    let mut land = Landscape::new(e_tilde, budget)?;
    if land.c.is_empty() {
        return Err(Error::Degenerate("a delta initialization admits no feasible direction".into()));
    }
    let (_, _, beta) = land.val(p);
    let dir = land.direction(&beta)?;
    let d = kkt_directional(&dir, p, Mode::Exact)?.mean;
    Ok((dir, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn f(c: &[f64]) -> Filter {
        Filter::new(0, c.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_bounds() {
        assert_eq!(pt_upper(&Filter::delta(3)).unwrap(), 1.0);
        assert_eq!(pt_lower(&Filter::delta(0)).unwrap(), 1.0);
        assert_abs_diff_eq!(pt_upper(&f(&[1.0, 0.3])).unwrap(), 0.7);
        assert_abs_diff_eq!(pt_lower(&f(&[1.0, -0.3])).unwrap(), 0.7);
        assert_eq!(pt_upper(&f(&[1.0, 0.5, 0.5])).unwrap(), 0.5);
        assert_abs_diff_eq!(pt_lower(&f(&[1.0, 0.5, 0.5])).unwrap(), 1.0 - 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(pt_lower(&f(&[1.0, 1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn projection_lands_on_constraint() {
        let c = [0.5, 0.25, 0.1];
        for v in [[1.0, 1.0, 1.0], [-1.0, 3.0, 0.0], [0.0, 0.0, 0.0]] {
            let b = project(&v, &c);
            assert!(b.iter().all(|&x| x >= 0.0));
            assert_abs_diff_eq!(b.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>(), 1.0, epsilon = 1e-14);
        }
        // already feasible points are fixed
        let b = project(&[2.0, 0.0, 0.0], &c);
        assert_abs_diff_eq!(b[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_differences() {
        let en = Enumerator::new(3, 0.37);
        let beta = [0.4, 1.1, 0.7];
        let mut g = [0.0; 3];
        en.value_grad(&beta, &mut g);
        for i in 0..3 {
            let h = 1e-6;
            let mut up = beta;
            up[i] += h;
            let mut dn = beta;
            dn[i] -= h;
            let fd = (en.value(&up) - en.value(&dn)) / (2.0 * h);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn one_sparse_tail() {
        let r = pt_exact(&f(&[1.0, 0.5]), 1e-9, &ThresholdBudget::default()).unwrap();
        assert_eq!(r.status, ThresholdStatus::Converged);
        assert_abs_diff_eq!(r.exact.unwrap(), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(r.lower, 0.5);
        assert_abs_diff_eq!(r.upper, 0.5);
        assert_eq!(r.support_argmin, Some(1));
    }

    #[test]
    fn delta_is_trivial() {
        let r = pt_exact(&Filter::delta(2).scale(-3.0), 1e-6, &ThresholdBudget::default()).unwrap();
        assert_eq!(r.status, ThresholdStatus::Trivial);
        assert_eq!(r.exact, Some(1.0));
    }

    #[test]
    fn geometric_tail_meets_upper_bound() {
        let s = 0.5;
        let r = pt_exact(&f(&[1.0, s, s * s]), 1e-7, &ThresholdBudget::default()).unwrap();
        assert!((r.exact.unwrap() - (1.0 - s)).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn two_equal_tail_entries_lie_between_bounds() {
        let r = pt_exact(&f(&[1.0, 0.5, 0.5]), 1e-7, &ThresholdBudget::default()).unwrap();
        let e = r.exact.unwrap();
        assert!(r.lower - 1e-6 <= e && e <= r.upper + 1e-6, "{r:?}");
    }

    #[test]
    fn witness_sign_flips_at_threshold() {
        let e = f(&[1.0, 0.4, -0.3, 0.2]);
        let b = ThresholdBudget::default();
        let p = pt_exact(&e, 1e-8, &b).unwrap().exact.unwrap();
        let (dir, below) = kkt_witness(&e, p - 0.02, &b).unwrap();
        assert!(below >= 0.0);
        let en = e.peak_normalized().unwrap();
        let dot: f64 = dir.support().map(|i| dir.get(i) * en.get(i)).sum();
        assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-12);
        let (_, above) = kkt_witness(&e, p + 0.02, &b).unwrap();
        assert!(above < 0.0);
    }
}
