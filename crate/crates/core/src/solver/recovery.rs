use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Filter;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub success: bool,
    /// `min_τ ‖α·shift(w, τ) − a⁻¹‖₁ / ‖a⁻¹‖∞`.
    pub aligned_error: f64,
    pub shift: i64,
    pub scale: f64,
}

/// Compares `w` with `a_inv` up to shift and scale. The scale for each shift
/// matches the two values at the peak of `a_inv`.
pub fn check_recovery(w: &Filter, a_inv: &Filter, eps: f64) -> Result<Recovery> {
    if w.is_zero() || a_inv.is_zero() {
        return Err(Error::ZeroFilter);
    }
    let peak = a_inv.peak_index().ok_or(Error::ZeroFilter)?;
    let vp = a_inv.get(peak);
    let norm = a_inv.norm_inf();
    let mut best = Recovery {
        success: false,
        aligned_error: f64::INFINITY,
        shift: 0,
        scale: 0.0,
    };
    for tau in (peak - w.end())..=(peak - w.offset()) {
        let ws = w.shift(tau);
        let at = ws.get(peak);
        if at == 0.0 {
            continue;
        }
        let alpha = vp / at;
        let lo = ws.offset().min(a_inv.offset());
        let hi = ws.end().max(a_inv.end());
        let err: f64 = (lo..=hi).map(|i| (alpha * ws.get(i) - a_inv.get(i)).abs()).sum::<f64>() / norm;
        if err < best.aligned_error {
            best = Recovery {
                success: false,
                aligned_error: err,
                shift: tau,
                scale: alpha,
            };
        }
    }
    best.success = best.aligned_error < eps;
    Ok(best)
}
