use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// 50% crossing of a logistic fit `logit P(success) = b₀ + b₁ (x − x̄)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticCrossing {
    pub crossing: f64,
    /// Delta-method standard error of `crossing`.
    pub stderr: f64,
    pub intercept: f64,
    pub slope: f64,
    pub center: f64,
    /// Every cell succeeded or every cell failed; the crossing is an
    /// extrapolation.
    pub one_sided: bool,
}

/// Small ridge keeping the fit finite under complete separation.
const RIDGE: f64 = 1e-4;

/// Maximum likelihood logistic fit on binomial counts per design point.
pub fn logistic_crossing(x: &[f64], successes: &[u64], trials: &[u64]) -> Result<LogisticCrossing> {
    if x.len() != successes.len() || x.len() != trials.len() || x.len() < 2 {
        return Err(invalid("logistic fit needs matching inputs with at least two points"));
    }
    if successes.iter().zip(trials).any(|(s, n)| s > n) {
        return Err(invalid("successes exceed trials"));
    }
    let total: u64 = trials.iter().sum();
    if total == 0 {
        return Err(invalid("logistic fit needs at least one trial"));
    }
    let center = x.iter().sum::<f64>() / x.len() as f64;
    let xs: Vec<f64> = x.iter().map(|v| v - center).collect();
    let penalized = |b0: f64, b1: f64| -> f64 {
        let mut ll = 0.0;
        for i in 0..xs.len() {
            let eta = b0 + b1 * xs[i];
            // log(1 + e^η) without overflow
            let softplus = eta.max(0.0) + (-eta.abs()).exp().ln_1p();
            ll += successes[i] as f64 * eta - trials[i] as f64 * softplus;
        }
        ll - 0.5 * RIDGE * (b0 * b0 + b1 * b1)
    };

    let (mut b0, mut b1) = (0.0, 0.0);
    let mut info = [[0.0; 2]; 2];
    for _ in 0..200 {
        let mut g = [-RIDGE * b0, -RIDGE * b1];
        info = [[RIDGE, 0.0], [0.0, RIDGE]];
        for i in 0..xs.len() {
            let n = trials[i] as f64;
            let mu = 1.0 / (1.0 + (-(b0 + b1 * xs[i])).exp());
            let r = successes[i] as f64 - n * mu;
            g[0] += r;
            g[1] += r * xs[i];
            let w = n * mu * (1.0 - mu);
            info[0][0] += w;
            info[0][1] += w * xs[i];
            info[1][1] += w * xs[i] * xs[i];
        }
        info[1][0] = info[0][1];
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        let d0 = (info[1][1] * g[0] - info[0][1] * g[1]) / det;
        let d1 = (info[0][0] * g[1] - info[1][0] * g[0]) / det;
        let base = penalized(b0, b1);
        let mut t = 1.0;
        while t > 1e-10 && penalized(b0 + t * d0, b1 + t * d1) < base {
            t *= 0.5;
        }
        b0 += t * d0;
        b1 += t * d1;
        if (t * d0).abs() + (t * d1).abs() < 1e-12 * (1.0 + b0.abs() + b1.abs()) {
            break;
        }
    }
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    let cov = [
        [info[1][1] / det, -info[0][1] / det],
        [-info[1][0] / det, info[0][0] / det],
    ];
    // crossing = center − b₀/b₁
    let grad = [-1.0 / b1, b0 / (b1 * b1)];
    let var = grad[0] * grad[0] * cov[0][0] + 2.0 * grad[0] * grad[1] * cov[0][1] + grad[1] * grad[1] * cov[1][1];
    let one_sided = successes.iter().all(|&s| s == 0)
        || successes.iter().zip(trials).all(|(s, n)| s == n);
    Ok(LogisticCrossing {
        crossing: center - b0 / b1,
        stderr: var.max(0.0).sqrt(),
        intercept: b0,
        slope: b1,
        center,
        one_sided,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; `NaN` when either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx).powi(2);
        syy += (ry[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
