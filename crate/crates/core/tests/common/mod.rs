//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's numerical kernels.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sparse_deconv::Filter;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E|μ + σG|` by quadrature over half-unit pieces, split at the kink.
pub fn folded_mean_quad(mu: f64, sigma: f64) -> f64 {
    let f = |t: f64| (mu + sigma * t).abs() * normal_pdf(t);
    let mut knots: Vec<f64> = (0..=56).map(|i| -14.0 + 0.5 * i as f64).collect();
    let kink = -mu / sigma;
    if kink.abs() < 14.0 {
        knots.push(kink);
        knots.sort_by(f64::total_cmp);
    }
    knots.windows(2).map(|w| quad(&f, w[0], w[1], 1e-16)).sum()
}

/// Sparse map from index to value.
pub fn as_map(f: &Filter) -> BTreeMap<i64, f64> {
    f.coeffs()
        .iter()
        .enumerate()
        .map(|(i, &v)| (f.offset() + i as i64, v))
        .collect()
}

/// Sum-of-products convolution over index maps.
pub fn naive_convolve(f: &Filter, g: &Filter) -> BTreeMap<i64, f64> {
    let mut out = BTreeMap::new();
    for (i, a) in as_map(f) {
        for (j, b) in as_map(g) {
            *out.entry(i + j).or_insert(0.0) += a * b;
        }
    }
    out
}

/// Largest pointwise difference between a filter and an index map.
pub fn max_diff(f: &Filter, m: &BTreeMap<i64, f64>) -> f64 {
    let fm = as_map(f);
    let keys: std::collections::BTreeSet<i64> = fm.keys().chain(m.keys()).copied().collect();
    keys.iter()
        .map(|k| (fm.get(k).unwrap_or(&0.0) - m.get(k).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

/// `E_I g(v_I)` by listing every subset with its probability.
pub fn subset_expectation<G: Fn(&[f64]) -> f64>(v: &[f64], p: f64, g: G) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        let mut chosen = Vec::new();
        for (i, &x) in v.iter().enumerate() {
            if mask >> i & 1 == 1 {
                prob *= p;
                chosen.push(x);
            } else {
                prob *= 1.0 - p;
            }
        }
        total += prob * g(&chosen);
    }
    total
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Random filter with `len` standard normal coefficients at `offset`.
pub fn random_filter<R: Rng>(rng: &mut R, offset: i64, len: usize) -> Filter {
    loop {
        let c: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        if c[0] != 0.0 && c[len - 1] != 0.0 {
            return Filter::new(offset, c).unwrap();
        }
    }
}

/// Unit vector of the given length.
pub fn random_unit<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    loop {
        let c: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = l2(&c);
        if n > 1e-3 {
            return c.iter().map(|x| x / n).collect();
        }
    }
}

/// `(1/M) Σ_t |y_{t−f} + w₁ y_{t−g}|` over the valid region.
pub fn one_dof_objective(y: &[f64], fixed: usize, free: usize, w1: f64) -> f64 {
    let hi = fixed.max(free);
    let lo = fixed.min(free);
    let m = y.len() - (hi - lo);
    let mut s = 0.0;
    for t in hi..(y.len() + lo) {
        s += (y[t - fixed] + w1 * y[t - free]).abs();
    }
    s / m as f64
}

/// Gaussian elimination with partial pivoting; `None` when near singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Valid-region rows of `w ⋆ y` for `w` on `lo ..= lo + d − 1`: row `t`
/// holds `y` at output `t` minus each tap.
pub fn conv_rows(y: &[f64], d: usize) -> Vec<Vec<f64>> {
    (0..y.len() + 1 - d)
        .map(|t| (0..d).map(|j| y[t + d - 1 - j]).collect())
        .collect()
}

/// `min (1/M) Σ|r_t·w|` subject to `c·w = 1` by enumerating all vertices:
/// `c·w = 1` plus `d − 1` rows with zero residual.
pub fn lp_vertex_min(rows: &[Vec<f64>], c: &[f64]) -> f64 {
    let d = c.len();
    let m = rows.len();
    let objective = |w: &[f64]| {
        rows.iter()
            .map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>().abs())
            .sum::<f64>()
            / m as f64
    };
    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; d - 1];
    fn walk(start: usize, depth: usize, pick: &mut Vec<usize>, m: usize, visit: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            visit(pick);
            return;
        }
        for i in start..m {
            pick[depth] = i;
            walk(i + 1, depth + 1, pick, m, visit);
        }
    }
    walk(0, 0, &mut pick, m, &mut |idx: &[usize]| {
        let mut a = vec![c.to_vec()];
        a.extend(idx.iter().map(|&i| rows[i].clone()));
        let mut b = vec![0.0; d];
        b[0] = 1.0;
        if let Some(w) = solve_dense(a, b) {
            best = best.min(objective(&w));
        }
    });
    best
}
