//! Finite-support filter algebra.
//!
//! A [`Filter`] is a real bisequence that is nonzero only on a contiguous
//! index range `offset ..= offset + len - 1`. Convolution, time reversal and
//! the scalar functionals used by the phase-transition theory (deltaness,
//! angle to the Kronecker delta, Fourier margin) live here; Z-transform root
//! factorizations and truncated inverses live in [`roots`].

mod conv;
pub mod roots;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use conv::{convolve, convolve_direct, convolve_fft, full_convolution, FFT_THRESHOLD};
pub use roots::{
    filter_from_roots, find_roots, root_subset_error_sq, truncated_inverse,
    truncated_inverse_error_sq, Gain, RootFactorization,
};

/// Real bisequence with finite support.
///
/// Entry `i` of `coeffs` sits at time `offset + i`. Leading and trailing
/// exact zeros are trimmed on construction, so the first and last stored
/// coefficients are nonzero unless the filter is the canonical zero filter
/// (`offset = 0`, `coeffs = [0.0]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FilterRepr", into = "FilterRepr")]
pub struct Filter {
    offset: i64,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FilterRepr {
    offset: i64,
    coeffs: Vec<f64>,
}

impl TryFrom<FilterRepr> for Filter {
    type Error = Error;

    fn try_from(r: FilterRepr) -> Result<Self> {
        Filter::new(r.offset, r.coeffs)
    }
}

impl From<Filter> for FilterRepr {
    fn from(f: Filter) -> Self {
        FilterRepr {
            offset: f.offset,
            coeffs: f.coeffs,
        }
    }
}

impl Filter {
    pub fn new(offset: i64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("filter coefficients must be non-empty"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("filter coefficients must be finite"));
        }
        Ok(Self::trimmed(offset, coeffs))
    }

    /// Builds a filter from coefficients already known to be finite.
    pub(crate) fn trimmed(offset: i64, mut coeffs: Vec<f64>) -> Self {
        let Some(first) = coeffs.iter().position(|&c| c != 0.0) else {
            return Self::zero();
        };
        let last = coeffs.iter().rposition(|&c| c != 0.0).unwrap();
        coeffs.truncate(last + 1);
        coeffs.drain(..first);
        Self {
            offset: offset + first as i64,
            coeffs,
        }
    }

    pub fn zero() -> Self {
        Self {
            offset: 0,
            coeffs: vec![0.0],
        }
    }

    /// Kronecker delta `e_k`.
    pub fn delta(k: i64) -> Self {
        Self {
            offset: k,
            coeffs: vec![1.0],
        }
    }

    /// `(1, s, s², …, s^{len-1})` at offset 0.
    pub fn geometric(s: f64, len: usize) -> Result<Self> {
        geometric_filter(s, len)
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Last index of the support (inclusive).
    pub fn end(&self) -> i64 {
        self.offset + self.coeffs.len() as i64 - 1
    }

    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        self.offset..=self.end()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Value at time `t` (zero outside the support).
    pub fn get(&self, t: i64) -> f64 {
        let i = t - self.offset;
        if i < 0 || i >= self.coeffs.len() as i64 {
            0.0
        } else {
            self.coeffs[i as usize]
        }
    }

    pub fn shift(&self, k: i64) -> Self {
        Self {
            offset: self.offset + k,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::trimmed(self.offset, self.coeffs.iter().map(|c| alpha * c).collect())
    }

    pub fn time_reverse(&self) -> Self {
        time_reverse(self)
    }

    /// Pointwise `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Filter) -> Self {
        let lo = self.offset.min(other.offset);
        let hi = self.end().max(other.end());
        let coeffs = (lo..=hi)
            .map(|t| self.get(t) + alpha * other.get(t))
            .collect();
        Self::trimmed(lo, coeffs)
    }

    pub fn sub(&self, other: &Filter) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn norm_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Index of the largest-magnitude entry; the smallest index wins ties.
    pub fn peak_index(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        let mut best = 0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.abs() > self.coeffs[best].abs() {
                best = i;
            }
        }
        Some(self.offset + best as i64)
    }

    /// Shifts and scales so that the peak sits at index 0 with value 1.
    pub fn peak_normalized(&self) -> Result<Self> {
        let t = self.peak_index().ok_or(Error::ZeroFilter)?;
        let v = self.get(t);
        Ok(self.shift(-t).scale(1.0 / v))
    }

    /// Entries of the filter without the peak entry, in index order.
    pub(crate) fn off_peak_values(&self) -> Result<Vec<f64>> {
        let t = self.peak_index().ok_or(Error::ZeroFilter)?;
        Ok(self
            .support()
            .filter(|&i| i != t)
            .map(|i| self.get(i))
            .collect())
    }
}

pub fn time_reverse(f: &Filter) -> Filter {
    let mut coeffs = f.coeffs.clone();
    coeffs.reverse();
    Filter {
        offset: -f.end(),
        coeffs,
    }
}

pub fn geometric_filter(s: f64, len: usize) -> Result<Filter> {
    if !(s.abs() < 1.0) {
        return Err(Error::RootOutsideUnitCircle { modulus: s.abs() });
    }
    if len == 0 {
        return Err(invalid("geometric filter length must be at least 1"));
    }
    let mut coeffs = Vec::with_capacity(len);
    let mut v = 1.0;
    for _ in 0..len {
        coeffs.push(v);
        v *= s;
    }
    Ok(Filter::trimmed(0, coeffs))
}

/// `‖a ⋆ w − e₀‖₂`.
pub fn inverse_error(a: &Filter, w: &Filter) -> f64 {
    convolve(a, w).sub(&Filter::delta(0)).norm_l2()
}

/// Deltaness discrepancy `|v|₍₂₎ / |v|₍₁₎`: second-largest over largest
/// absolute entry. Zero for a scaled delta, one for two tied peaks.
pub fn deltaness(v: &Filter) -> Result<f64> {
    if v.is_zero() {
        return Err(Error::ZeroFilter);
    }
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for c in v.coeffs() {
        let a = c.abs();
        if a > first {
            second = first;
            first = a;
        } else if a > second {
            second = a;
        }
    }
    Ok(second / first)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaAngle {
    pub tan: f64,
    pub cot: f64,
}

/// Angle between `v` and the Kronecker delta placed at the peak of `v`.
///
/// `tan = ‖v′‖₂ / |v_peak|` where `v′` is `v` with its peak zeroed.
pub fn angle_to_delta(v: &Filter) -> Result<DeltaAngle> {
    let t = v.peak_index().ok_or(Error::ZeroFilter)?;
    let peak = v.get(t).abs();
    let rest: f64 = v.off_peak_values()?.iter().map(|c| c * c).sum::<f64>().sqrt();
    let tan = rest / peak;
    let cot = if tan == 0.0 { f64::INFINITY } else { peak / rest };
    Ok(DeltaAngle { tan, cot })
}

/// Extremes of `|Σ aₙ e^{2πinω}|` over the grid `ω = j / M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerMargin {
    /// `λ_m(a)`, the smallest magnitude; zero means `a` is not invertible.
    pub min: f64,
    /// `λ_M(a)`, the largest magnitude.
    pub max: f64,
}

impl WienerMargin {
    /// Condition number `λ_M / λ_m`.
    pub fn kappa(&self) -> f64 {
        self.max / self.min
    }
}

pub fn wiener_margin(a: &Filter, grid: usize) -> Result<WienerMargin> {
    if grid < 2 * a.len() {
        return Err(invalid(format!(
            "frequency grid of {grid} points is smaller than twice the filter length {}",
            a.len()
        )));
    }
    use num_complex::Complex64;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid];
    for (i, &c) in a.coeffs().iter().enumerate() {
        buf[i] = Complex64::new(c, 0.0);
    }
    let fft = rustfft::FftPlanner::<f64>::new().plan_fft_forward(grid);
    fft.process(&mut buf);
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for z in &buf {
        let m = z.norm();
        min = min.min(m);
        max = max.max(m);
    }
    Ok(WienerMargin { min, max })
}

/// One-sided inverse of a filter whose first coefficient is nonzero, by
/// power-series division, truncated once `tail` consecutive coefficients fall
/// below `tol` (or at `max_len`).
///
/// Exact as a bisequence inverse only when the filter is minimum phase (all
/// Z-transform roots inside the unit circle).
pub fn causal_inverse(a: &Filter, tol: f64, max_len: usize) -> Result<Filter> {
    if a.is_zero() {
        return Err(Error::ZeroFilter);
    }
    let c = a.coeffs();
    let lead = c[0];
    let mut inv: Vec<f64> = Vec::with_capacity(64);
    inv.push(1.0 / lead);
    let window = c.len().max(2);
    let mut small = 0usize;
    while inv.len() < max_len {
        let n = inv.len();
        let mut acc = 0.0;
        for j in 1..c.len().min(n + 1) {
            acc += c[j] * inv[n - j];
        }
        let v = -acc / lead;
        inv.push(v);
        if v.abs() < tol {
            small += 1;
            if small >= window {
                break;
            }
        } else {
            small = 0;
        }
    }
    Ok(Filter::trimmed(-a.offset(), inv))
}
