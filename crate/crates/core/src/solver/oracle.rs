//! Closed-form solution when the filter has a single free coefficient.
//!
//! With `w = e_f + w₁ e_g` the objective is `(1/M) Σ_t |y_{t-f} + w₁ y_{t-g}|`,
//! a weighted sum of absolute deviations in `w₁`, minimized at a weighted
//! median of the breakpoints `-y_{t-f} / y_{t-g}` with weights `|y_{t-g}|`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signals::Window;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneDofSolution {
    pub w1: f64,
    pub objective: f64,
    /// False when a whole interval of `w₁` is optimal; `w1` is then its left end.
    pub unique: bool,
}

pub fn solve_l1_oracle_1dof(y: &Window, fixed: i64, free: i64) -> Result<OneDofSolution> {
    if fixed == free {
        return Err(invalid("fixed and free indices must differ"));
    }
    let (lo, hi) = (fixed.min(free), fixed.max(free));
    let span = (hi - lo) as usize;
    if y.len() <= span {
        return Err(Error::InsufficientMargin("no valid region".into()));
    }
    let ts = (y.start + hi)..(y.end() + lo);
    let m = ts.end - ts.start;
    let terms: Vec<(f64, f64)> = ts
        .map(|t| (y.get(t - fixed).unwrap(), y.get(t - free).unwrap()))
        .collect();

    let mut bps: Vec<(f64, f64)> = terms
        .iter()
        .filter(|(_, g)| *g != 0.0)
        .map(|&(f, g)| (-f / g, g.abs()))
        .collect();
    if bps.is_empty() {
        return Err(Error::Degenerate("free coefficient multiplies only zeros".into()));
    }
    bps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = bps.iter().map(|b| b.1).sum();
    let mut cum = 0.0;
    let mut k = 0;
    for (i, b) in bps.iter().enumerate() {
        cum += b.1;
        if cum >= 0.5 * total {
            k = i;
            break;
        }
    }
    let w1 = bps[k].0;
    let flat = (cum - 0.5 * total).abs() <= 1e-12 * total
        && bps.get(k + 1).is_some_and(|next| next.0 > w1);
    let objective = terms.iter().map(|(f, g)| (f + w1 * g).abs()).sum::<f64>() / m as f64;
    Ok(OneDofSolution {
        w1,
        objective,
        unique: !flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        // terms t=1..3 with f=0, g=1: (y1 + w y0), (y2 + w y1), (y3 + w y2)
        let y = Window::new(0, vec![1.0, 2.0, -1.0, 4.0]).unwrap();
        let s = solve_l1_oracle_1dof(&y, 0, 1).unwrap();
        // breakpoints -2 (w 1), 0.5 (w 2), 4 (w 1): median 0.5
        assert_eq!(s.w1, 0.5);
        assert!(s.unique);
        assert!((s.objective - (2.5 + 0.0 + 3.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_reports_interval() {
        let y = Window::new(0, vec![1.0, 1.0, 3.0]).unwrap();
        // breakpoints -1 and -3 with equal weights
        let s = solve_l1_oracle_1dof(&y, 0, 1).unwrap();
        assert_eq!(s.w1, -3.0);
        assert!(!s.unique);
    }

    #[test]
    fn all_zero_free_column() {
        let y = Window::new(0, vec![0.0, 0.0, 5.0]).unwrap();
        assert!(matches!(solve_l1_oracle_1dof(&y, 0, 1), Err(Error::Degenerate(_))));
    }
}
