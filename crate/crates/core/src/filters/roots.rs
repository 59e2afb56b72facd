//! Z-transform root factorizations and truncated inverse filters.
//!
//! With `A(z) = Σ aᵢ z^{-i}`, a factorization stores
//!
//! ```text
//! A(z) = c₀ · z^{-shift} · ∏ⱼ (1 − s₋ⱼ z) · ∏ᵢ (1 − sᵢ z⁻¹)
//! ```
//!
//! with every `|s| < 1`. Factors in `z⁻¹` ("plus" roots) extend the support
//! forward in time, factors in `z` ("minus" roots) backward. Inverting each
//! factor by a geometric series cut at `r` terms gives the truncated inverse
//! `wʳ`, whose residual `wʳ ⋆ a − e₀` is `∏ (1 − sʳ z^{∓r}) − 1`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::Filter;
use crate::error::{invalid, Error, Result};

const DK_MAX_ITERS: usize = 500;
const DK_STEP_TOL: f64 = 1e-12;
const DK_SEED: u64 = 0x5eed_d0c5;
const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Scale `c₀` of a factorization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    Fixed(f64),
    /// Choose `c₀` so the unshifted product has coefficient 1 at index 0.
    Normalize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootFactorization {
    /// Roots paired with `z`.
    pub minus_roots: Vec<Complex64>,
    /// Roots paired with `z⁻¹`.
    pub plus_roots: Vec<Complex64>,
    pub gain: Gain,
    /// Time shift applied after expansion.
    #[serde(default)]
    pub shift: i64,
}

impl RootFactorization {
    pub fn new(minus_roots: Vec<Complex64>, plus_roots: Vec<Complex64>, gain: Gain) -> Result<Self> {
        let rf = Self {
            minus_roots,
            plus_roots,
            gain,
            shift: 0,
        };
        rf.validate()?;
        Ok(rf)
    }

    /// Factorization with real roots only.
    pub fn real(minus_roots: &[f64], plus_roots: &[f64], gain: Gain) -> Result<Self> {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(c(minus_roots), c(plus_roots), gain)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Complex64> {
        self.minus_roots.iter().chain(self.plus_roots.iter())
    }

    pub fn root_count(&self) -> usize {
        self.minus_roots.len() + self.plus_roots.len()
    }

    /// Largest root modulus `|s|₍₁₎`; zero when there are no roots.
    pub fn max_modulus(&self) -> f64 {
        self.roots().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for z in self.roots() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(invalid("roots must be finite"));
            }
            if z.norm() >= 1.0 {
                return Err(Error::RootOutsideUnitCircle { modulus: z.norm() });
            }
        }
        if let Gain::Fixed(c) = self.gain {
            if !c.is_finite() || c == 0.0 {
                return Err(invalid("gain must be finite and nonzero"));
            }
        }
        for set in [&self.minus_roots, &self.plus_roots] {
            if !conjugate_closed(set) {
                return Err(invalid(
                    "complex roots must come in conjugate pairs for a real filter",
                ));
            }
        }
        Ok(())
    }

    /// The concrete `c₀`, resolving [`Gain::Normalize`].
    pub fn resolved_gain(&self) -> Result<f64> {
        match self.gain {
            Gain::Fixed(c) => Ok(c),
            Gain::Normalize => {
                let unit = self.unscaled_product();
                let at_zero = unit[self.minus_roots.len()];
                if at_zero.abs() < 1e-300 {
                    Err(Error::NormalizationImpossible)
                } else {
                    Ok(1.0 / at_zero)
                }
            }
        }
    }

    /// Coefficients of `∏(1 − s₋ z)∏(1 − s₊ z⁻¹)` from index `-N₋` to `N₊`.
    fn unscaled_product(&self) -> Vec<f64> {
        let mut minus = expand_linear_factors(&self.minus_roots);
        minus.reverse();
        let plus = expand_linear_factors(&self.plus_roots);
        real_parts(&complex_convolve(&minus, &plus))
    }
}

fn conjugate_closed(roots: &[Complex64]) -> bool {
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let z = roots[i];
        let tol = 1e-9 * z.norm().max(1.0);
        if z.im.abs() <= tol {
            used[i] = true;
            continue;
        }
        let partner = (0..roots.len())
            .filter(|&j| j != i && !used[j])
            .find(|&j| (roots[j] - z.conj()).norm() <= 1e-7 * z.norm().max(1.0));
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}

/// Ascending coefficients of `∏ (1 − rₖ x)`.
fn expand_linear_factors(roots: &[Complex64]) -> Vec<Complex64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= r * c;
        }
        poly = next;
    }
    poly
}

fn complex_convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn real_parts(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.re).collect()
}

pub fn filter_from_roots(rf: &RootFactorization) -> Result<Filter> {
    rf.validate()?;
    let c0 = rf.resolved_gain()?;
    let coeffs: Vec<f64> = rf.unscaled_product().into_iter().map(|c| c0 * c).collect();
    let offset = -(rf.minus_roots.len() as i64) + rf.shift;
    Filter::new(offset, coeffs)
}

/// Truncated inverse `wʳ`: every factor `(1 − s z^{∓1})⁻¹` is replaced by its
/// first `r` geometric terms, and the product is divided by `c₀`.
pub fn truncated_inverse(rf: &RootFactorization, r: usize) -> Result<Filter> {
    if r == 0 {
        return Err(invalid("truncation length r must be at least 1"));
    }
    rf.validate()?;
    let c0 = rf.resolved_gain()?;
    let partial = |s: Complex64| -> Vec<Complex64> {
        let mut v = Vec::with_capacity(r);
        let mut p = Complex64::new(1.0, 0.0);
        for _ in 0..r {
            v.push(p);
            p *= s;
        }
        v
    };
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &s in &rf.minus_roots {
        let mut factor = partial(s);
        factor.reverse();
        poly = complex_convolve(&poly, &factor);
    }
    for &s in &rf.plus_roots {
        poly = complex_convolve(&poly, &partial(s));
    }
    let coeffs: Vec<f64> = poly.iter().map(|z| z.re / c0).collect();
    let offset = -((r as i64 - 1) * rf.minus_roots.len() as i64) - rf.shift;
    Filter::new(offset, coeffs)
}

/// Exact `‖wʳ ⋆ a − e₀‖₂²` from the roots alone.
///
/// `wʳ ⋆ a = ∏ (1 − sʳ z^{±r})`; subsets of roots landing on the same lag
/// are summed before squaring.
pub fn truncated_inverse_error_sq(rf: &RootFactorization, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(invalid("truncation length r must be at least 1"));
    }
    rf.validate()?;
    let pow = |s: &Complex64| s.powu(r as u32);
    // lag unit r; minus roots contribute lag -1, plus roots lag +1
    let minus: Vec<Complex64> = rf.minus_roots.iter().map(pow).collect();
    let plus: Vec<Complex64> = rf.plus_roots.iter().map(pow).collect();
    let mut m = expand_linear_factors(&minus);
    m.reverse();
    let mut prod = complex_convolve(&m, &expand_linear_factors(&plus));
    prod[minus.len()] -= Complex64::new(1.0, 0.0);
    Ok(prod.iter().map(|z| z.re * z.re).sum())
}

/// `Σ_{∅≠S⊆roots} ∏_{k∈S} |s_k|^{2r}`, which equals
/// [`truncated_inverse_error_sq`] whenever no two root subsets share a lag
/// (e.g. one plus root and one minus root).
pub fn root_subset_error_sq(rf: &RootFactorization, r: usize) -> f64 {
    rf.roots()
        .map(|s| 1.0 + s.norm().powi(2 * r as i32))
        .product::<f64>()
        - 1.0
}

/// Factorizes the Z-transform of `a` with Durand–Kerner iteration.
///
/// Roots of modulus above one become minus roots `1/r`; the resulting scale
/// and lag are folded into `gain` and `shift`, so
/// `filter_from_roots(find_roots(a)) ≈ a`.
pub fn find_roots(a: &Filter) -> Result<RootFactorization> {
    if a.is_zero() {
        return Err(Error::ZeroFilter);
    }
    let c = a.coeffs();
    if c.len() == 1 {
        return Ok(RootFactorization {
            minus_roots: vec![],
            plus_roots: vec![],
            gain: Gain::Fixed(c[0]),
            shift: a.offset(),
        });
    }
    let roots = durand_kerner(c)?;
    let roots = symmetrize_conjugates(roots);

    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut gain = Complex64::new(c[0], 0.0);
    for r in roots {
        let m = r.norm();
        if (m - 1.0).abs() < 1e-10 {
            return Err(Error::RootOutsideUnitCircle { modulus: m });
        }
        if m < 1.0 {
            plus.push(r);
        } else {
            minus.push(r.inv());
            gain *= -r;
        }
    }
    let rf = RootFactorization {
        shift: a.offset() + minus.len() as i64,
        minus_roots: minus,
        plus_roots: plus,
        gain: Gain::Fixed(gain.re),
    };

    let back = filter_from_roots(&rf)?;
    let scale = a.norm_inf();
    let resid = back.sub(a).norm_inf() / scale;
    if resid > RECONSTRUCTION_TOL {
        return Err(Error::RootFinderDiverged {
            iterations: DK_MAX_ITERS,
            residual: resid,
        });
    }
    Ok(rf)
}

/// Roots of `c[0] xⁿ⁻¹ + c[1] xⁿ⁻² + … + c[n-1]`.
fn durand_kerner(c: &[f64]) -> Result<Vec<Complex64>> {
    let degree = c.len() - 1;
    let monic: Vec<Complex64> = c.iter().map(|&x| Complex64::new(x / c[0], 0.0)).collect();
    let eval = |z: Complex64| monic.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k);

    // Fujiwara-style radius estimate for the starting circle
    let radius = (1..=degree)
        .map(|k| monic[k].norm().powf(1.0 / k as f64))
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(DK_SEED);
    let mut z: Vec<Complex64> = (0..degree)
        .map(|_| Complex64::from_polar(radius, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();

    let mut converged = false;
    for _ in 0..DK_MAX_ITERS {
        let mut worst = 0.0f64;
        for i in 0..degree {
            let zi = z[i];
            let mut denom = Complex64::new(1.0, 0.0);
            for (j, &zj) in z.iter().enumerate() {
                if j != i {
                    denom *= zi - zj;
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(1e-300, 0.0);
            }
            let step = eval(zi) / denom;
            z[i] = zi - step;
            worst = worst.max(step.norm() / zi.norm().max(1.0));
        }
        if worst < DK_STEP_TOL {
            converged = true;
            break;
        }
    }

    // Newton polish on the original polynomial
    let deriv: Vec<Complex64> = (0..degree)
        .map(|k| monic[k] * (degree - k) as f64)
        .collect();
    let eval_d = |z: Complex64| deriv.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k);
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = eval_d(*zi);
            if d.norm() == 0.0 {
                break;
            }
            let step = eval(*zi) / d;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *zi -= step;
        }
    }

    if !converged {
        // reconstruction check in find_roots decides; tight clusters converge slowly
        log::debug!("durand-kerner hit the iteration cap");
    }
    Ok(z)
}

fn symmetrize_conjugates(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    let n = roots.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let z = roots[i];
        if z.im.abs() <= 1e-9 * z.norm().max(1.0) {
            roots[i] = Complex64::new(z.re, 0.0);
            done[i] = true;
            continue;
        }
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .min_by(|&a, &b| {
                (roots[a] - z.conj())
                    .norm()
                    .total_cmp(&(roots[b] - z.conj()).norm())
            });
        if let Some(j) = partner {
            let avg = (z + roots[j].conj()) * 0.5;
            roots[i] = avg;
            roots[j] = avg.conj();
            done[j] = true;
        }
        done[i] = true;
    }
    roots
}
