//! The convex program
//!
//! ```text
//! minimize   (1/M) ‖w ⋆ y‖₁   over the valid region (M outputs)
//! subject to ⟨ã, w†⟩ = 1
//! ```
//!
//! over filters `w` supported on `lo ..= hi`, solved by ADMM on the split
//! `z = w ⋆ y`. The `w`-update is an equality-constrained least-squares
//! problem whose bordered Gram system is factored once per solve. Every few
//! iterations an active-set step snaps the iterate to the nearby vertex of the
//! underlying linear program and checks the exact subgradient optimality
//! condition there; a certified vertex ends the solve early.

mod oracle;
mod recovery;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filters::Filter;
use crate::signals::Window;

pub use oracle::{solve_l1_oracle_1dof, OneDofSolution};
pub use recovery::{check_recovery, Recovery};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// ADMM penalty relative to the `1/M` objective normalization: the
    /// soft-threshold level is `1/rho` in units of the scaled observation.
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub over_relaxation: f64,
    /// Attempt a vertex polish every this many iterations (0 disables it).
    pub polish_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 2.0,
            max_iters: 20_000,
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            over_relaxation: 1.5,
            polish_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        for (name, t) in [("tol_primal", self.tol_primal), ("tol_dual", self.tol_dual)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return Err(invalid("over_relaxation must lie in [1, 1.9]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub w: Filter,
    /// `(1/M) ‖w ⋆ y‖₁` on the valid region.
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// The returned filter passed the exact subgradient optimality check.
    pub certified: bool,
    /// `|⟨ã, w†⟩ − 1|`.
    pub constraint_residual: f64,
    /// Number of valid-region outputs `M` used for normalization.
    pub valid_len: usize,
}

/// Per-iteration diagnostics (`--dump-iterates`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub objective: f64,
    pub r_primal: f64,
    pub r_dual: f64,
}

/// Filter half-length `k`: solves over `w` supported on `-k ..= k`.
pub fn solve_l1(y: &Window, k: usize, a_tilde: &Filter, cfg: &SolverConfig) -> Result<SolverResult> {
    let k = k as i64;
    L1Problem::new(y, -k, k, a_tilde)?.solve(cfg, None)
}

/// Solves over `w` supported on the contiguous range `lo ..= hi`.
pub fn solve_l1_support(
    y: &Window,
    lo: i64,
    hi: i64,
    a_tilde: &Filter,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    L1Problem::new(y, lo, hi, a_tilde)?.solve(cfg, None)
}

/// A prepared instance: the (scaled) convolution operator restricted to the
/// valid region, and the constraint row.
pub struct L1Problem {
    lo: i64,
    /// Row-major `M × d`, row `t` holds the samples multiplying `w_lo ..= w_hi`.
    rows: Vec<f64>,
    m: usize,
    d: usize,
    c: DVector<f64>,
    /// Observations are divided by this before solving.
    scale: f64,
}

impl L1Problem {
    pub fn new(y: &Window, lo: i64, hi: i64, a_tilde: &Filter) -> Result<Self> {
        if hi < lo {
            return Err(invalid("filter support must satisfy lo <= hi"));
        }
        if a_tilde.is_zero() {
            return Err(Error::ZeroFilter);
        }
        let d = (hi - lo + 1) as usize;
        if y.len() < d {
            return Err(Error::InsufficientMargin(format!(
                "observation of {} samples has no valid region for a filter of length {d}",
                y.len()
            )));
        }
        let m = y.len() - d + 1;
        let scale = y.values.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Degenerate("observation is identically zero".into()));
        }
        let mut rows = Vec::with_capacity(m * d);
        for t in 0..m {
            for j in 0..d {
                rows.push(y.values[t + d - 1 - j] / scale);
            }
        }
        // ⟨ã, w†⟩ = Σ_j ã_{-j} w_j
        let c = DVector::from_iterator(d, (0..d).map(|j| a_tilde.get(-(lo + j as i64))));
        if c.iter().all(|&v| v == 0.0) {
            return Err(invalid("constraint ⟨ã, w†⟩ does not involve the filter support"));
        }
        Ok(Self { lo, rows, m, d, c, scale })
    }

    pub fn valid_len(&self) -> usize {
        self.m
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.rows[t * self.d..(t + 1) * self.d]
    }

    fn apply(&self, w: &DVector<f64>, out: &mut DVector<f64>) {
        for t in 0..self.m {
            out[t] = self.row(t).iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_t(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for t in 0..self.m {
            let vt = v[t];
            if vt != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(t)) {
                    *o += a * vt;
                }
            }
        }
    }

    fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.d, self.d);
        for t in 0..self.m {
            let r = self.row(t);
            for i in 0..self.d {
                for j in i..self.d {
                    g[(i, j)] += r[i] * r[j];
                }
            }
        }
        for i in 0..self.d {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    /// Scaled objective `(1/M) ‖A w‖₁`.
    fn scaled_objective(&self, w: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for t in 0..self.m {
            s += self.row(t).iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>().abs();
        }
        s / self.m as f64
    }

    fn to_filter(&self, w: &DVector<f64>) -> Filter {
        Filter::trimmed(self.lo, w.iter().copied().collect())
    }

    pub fn solve(
        &self,
        cfg: &SolverConfig,
        mut observer: Option<&mut dyn FnMut(&IterateRecord)>,
    ) -> Result<SolverResult> {
        cfg.validate()?;
        let (m, d) = (self.m, self.d);

        let mut kkt = DMatrix::zeros(d + 1, d + 1);
        kkt.view_mut((0, 0), (d, d)).copy_from(&self.gram());
        for j in 0..d {
            kkt[(j, d)] = self.c[j];
            kkt[(d, j)] = self.c[j];
        }
        let sv = kkt.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-12 * smax) {
            return Err(Error::Degenerate(
                "bordered Gram system is singular; the observation does not determine w".into(),
            ));
        }
        let lu = kkt.lu();

        // penalty on the unnormalized ‖z‖₁ scale
        let rho = cfg.rho / m as f64;
        let alpha = cfg.over_relaxation;
        let thresh = 1.0 / (m as f64 * rho);

        let mut w = &self.c / self.c.norm_squared();
        let mut aw = DVector::zeros(m);
        self.apply(&w, &mut aw);
        let mut z = aw.clone();
        let mut u = DVector::<f64>::zeros(m);
        let mut rhs = DVector::<f64>::zeros(d + 1);
        let mut atv = DVector::<f64>::zeros(d);
        let mut z_old = DVector::<f64>::zeros(m);
        let mut scratch = DVector::<f64>::zeros(m);

        let mut best: Option<(DVector<f64>, f64, bool)> = None;
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;

        for iter in 1..=cfg.max_iters {
            iterations = iter;
            scratch.copy_from(&z);
            scratch -= &u;
            self.apply_t(&scratch, &mut atv);
            rhs.rows_mut(0, d).copy_from(&atv);
            rhs[d] = 1.0;
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Degenerate("bordered Gram system is singular".into()))?;
            w.copy_from(&sol.rows(0, d));
            self.apply(&w, &mut aw);

            z_old.copy_from(&z);
            for t in 0..m {
                let hat = alpha * aw[t] + (1.0 - alpha) * z_old[t];
                let v = hat + u[t];
                z[t] = v.signum() * (v.abs() - thresh).max(0.0);
                u[t] = v - z[t];
            }

            scratch.copy_from(&aw);
            scratch -= &z;
            let r_norm = scratch.norm();
            scratch.copy_from(&z);
            scratch -= &z_old;
            self.apply_t(&scratch, &mut atv);
            let s_norm = rho * atv.norm();
            self.apply_t(&u, &mut atv);
            primal = r_norm / aw.norm().max(z.norm()).max(1e-300);
            dual = s_norm / (rho * atv.norm()).max(1.0 / m as f64);

            if let Some(obs) = observer.as_deref_mut() {
                obs(&IterateRecord {
                    iter,
                    objective: self.scale * self.scaled_objective(&w),
                    r_primal: primal,
                    r_dual: dual,
                });
            }

            if cfg.polish_every > 0 && iter % cfg.polish_every == 0 {
                if let Some(v) = self.polish(&w, &u, rho) {
                    if v.certified {
                        best = Some((v.w, v.objective, true));
                        converged = true;
                        break;
                    }
                }
            }
            if primal < cfg.tol_primal && dual < cfg.tol_dual {
                converged = true;
                break;
            }
        }

        if best.is_none() {
            let admm_obj = self.scaled_objective(&w);
            let mut pick = (w.clone(), admm_obj, false);
            if cfg.polish_every > 0 {
                if let Some(v) = self.polish(&w, &u, rho) {
                    if v.certified || v.objective <= admm_obj * (1.0 + 1e-12) {
                        pick = (v.w, v.objective, v.certified);
                    }
                }
            }
            converged |= pick.2;
            best = Some(pick);
        }
        let (w, obj, certified) = best.unwrap();
        let constraint_residual = (self.c.dot(&w) - 1.0).abs();
        Ok(SolverResult {
            w: self.to_filter(&w),
            objective: self.scale * obj,
            iterations,
            primal_residual: primal,
            dual_residual: dual,
            converged,
            certified,
            constraint_residual,
            valid_len: m,
        })
    }

    /// Greedily picks up to `d − 1` rows from `order` that are linearly
    /// independent of each other and of `c`, first insisting on a well
    /// conditioned choice and then relaxing.
    fn independent_rows(&self, order: &[usize], norms: &[f64]) -> Vec<usize> {
        let d = self.d;
        let mut picked = Vec::new();
        for tol in [0.1, 1e-3, 1e-8] {
            let mut basis: Vec<DVector<f64>> = vec![&self.c / self.c.norm()];
            picked.clear();
            for &t in order {
                if picked.len() == d - 1 {
                    break;
                }
                let mut v = DVector::from_row_slice(self.row(t)) / norms[t];
                for q in &basis {
                    let proj = q.dot(&v);
                    v.axpy(-proj, q, 1.0);
                }
                let n = v.norm();
                if n > tol {
                    basis.push(v / n);
                    picked.push(t);
                }
            }
            if picked.len() == d - 1 {
                break;
            }
        }
        picked
    }

    fn bordered(&self, rows: &[usize]) -> DMatrix<f64> {
        let d = self.d;
        let mut b = DMatrix::zeros(d, d);
        for (i, &t) in rows.iter().enumerate() {
            b.row_mut(i).copy_from_slice(self.row(t));
        }
        b.row_mut(d - 1).copy_from(&self.c.transpose());
        b
    }

    /// Snaps `w_guess` to the vertex cut out by `d − 1` of its smallest
    /// residual rows and checks optimality there.
    ///
    /// The check needs multipliers `λ_t ∈ [−1, 1]` on the zero-residual rows
    /// `Z` and a scalar `μ` with
    /// `Σ_{t∉Z} sign(r_t) A_t + Σ_{t∈Z} λ_t A_t + μ c = 0`.
    /// Starting from the ADMM dual `u` (scaled by `Mρ`), the equation is
    /// repaired by a minimum-norm correction weighted by `1 − |λ_t|`, then the
    /// box and the equation are both verified.
    fn polish(&self, w_guess: &DVector<f64>, u: &DVector<f64>, rho: f64) -> Option<Vertex> {
        let (m, d) = (self.m, self.d);
        let mut r = DVector::zeros(m);
        self.apply(w_guess, &mut r);

        let norms: Vec<f64> = (0..m)
            .map(|t| self.row(t).iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        let mut order: Vec<usize> = (0..m).filter(|&t| norms[t] > 0.0).collect();
        order.sort_by(|&a, &b| (r[a].abs() / norms[a]).total_cmp(&(r[b].abs() / norms[b])));
        let active = self.independent_rows(&order, &norms);
        if active.len() < d - 1 {
            return None;
        }
        let mut e = DVector::zeros(d);
        e[d - 1] = 1.0;
        let w = self.bordered(&active).lu().solve(&e)?;
        if w.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let objective = self.scaled_objective(&w);
        let mut vertex = Vertex {
            w,
            objective,
            certified: false,
        };

        self.apply(&vertex.w, &mut r);
        let tiny = 1e-11 * (1.0 + vertex.w.amax());
        let scale = m as f64 * rho;
        let zero: Vec<bool> = (0..m).map(|t| r[t].abs() <= tiny * norms[t].max(1.0)).collect();
        let mut lambda: Vec<f64> = (0..m)
            .map(|t| {
                if !zero[t] {
                    r[t].signum()
                } else {
                    (scale * u[t]).clamp(-1.0, 1.0)
                }
            })
            .collect();

        let mut resid = DVector::zeros(d);
        for t in 0..m {
            if lambda[t] != 0.0 {
                resid.axpy(lambda[t], &DVector::from_row_slice(self.row(t)), 1.0);
            }
        }
        let mut kkt = DMatrix::zeros(d + 1, d + 1);
        for t in (0..m).filter(|&t| zero[t]) {
            let wt = 1.0 - lambda[t].abs();
            if wt <= 0.0 {
                continue;
            }
            let row = self.row(t);
            for i in 0..d {
                for j in 0..d {
                    kkt[(i, j)] += wt * row[i] * row[j];
                }
            }
        }
        for j in 0..d {
            kkt[(j, d)] = self.c[j];
            kkt[(d, j)] = self.c[j];
        }
        let mut rhs = DVector::zeros(d + 1);
        rhs.rows_mut(0, d).copy_from(&(-&resid));
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return Some(vertex);
        };
        let nu = sol.rows(0, d).into_owned();
        let mu = sol[d];
        for t in (0..m).filter(|&t| zero[t]) {
            let wt = 1.0 - lambda[t].abs();
            if wt > 0.0 {
                let dot: f64 = self.row(t).iter().zip(nu.iter()).map(|(a, b)| a * b).sum();
                lambda[t] += wt * dot;
            }
        }
        if lambda.iter().any(|l| !l.is_finite() || l.abs() > 1.0 + 1e-9) {
            return Some(vertex);
        }
        let mut check = &self.c * mu;
        let mut mass = mu.abs() * self.c.norm();
        for t in 0..m {
            if lambda[t] != 0.0 {
                check.axpy(lambda[t], &DVector::from_row_slice(self.row(t)), 1.0);
                mass += lambda[t].abs() * norms[t];
            }
        }
        vertex.certified = check.norm() <= 1e-9 * mass.max(1.0);
        Some(vertex)
    }
}

struct Vertex {
    w: DVector<f64>,
    objective: f64,
    certified: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::geometric_filter;
    use crate::signals::{observe, BgModel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            over_relaxation: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            tol_primal: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_observation_is_degenerate() {
        let y = Window::new(0, vec![0.0; 50]).unwrap();
        let err = solve_l1(&y, 1, &Filter::delta(0), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn too_short_observation() {
        let y = Window::new(0, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            solve_l1(&y, 1, &Filter::delta(0), &SolverConfig::default()),
            Err(Error::InsufficientMargin(_))
        ));
    }

    #[test]
    fn k_zero_returns_delta() {
        let y = Window::new(0, vec![1.0, -2.0, 0.5, 0.0]).unwrap();
        let res = solve_l1(&y, 0, &Filter::delta(0), &SolverConfig::default()).unwrap();
        assert_eq!(res.w, Filter::delta(0));
        assert_abs_diff_eq!(res.objective, 3.5 / 4.0, epsilon = 1e-15);
        assert!(res.certified);
    }

    #[test]
    fn identity_blur_recovers_delta() {
        let m = BgModel::new(0.2, 21).unwrap();
        let obs = observe(&Filter::delta(0), &m, -200..201, 0).unwrap();
        let res = solve_l1(&obs.y, 1, &Filter::delta(0), &SolverConfig::default()).unwrap();
        assert!(res.converged);
        let rec = check_recovery(&res.w, &Filter::delta(0), 1e-3).unwrap();
        assert!(rec.success, "{res:?}");
    }

    #[test]
    fn single_root_inside_success_region() {
        let s = 0.5;
        let a = geometric_filter(s, 200).unwrap();
        let m = BgModel::new(0.1, 5).unwrap();
        let obs = observe(&a, &m, -200..201, 0).unwrap();
        let res = solve_l1(&obs.y, 1, &Filter::delta(0), &SolverConfig::default()).unwrap();
        assert!(res.certified);
        assert!(res.constraint_residual <= 10.0 * 1e-8);
        let a_inv = Filter::new(0, vec![1.0, -s]).unwrap();
        assert!(check_recovery(&res.w, &a_inv, 1e-3).unwrap().success, "{:?}", res.w);
    }

    #[test]
    fn general_constraint_row() {
        // ⟨ã, w†⟩ = w_0 + 0.5 w_{-1} for ã = (1, 0.5) at offset 0
        let a_tilde = Filter::new(0, vec![1.0, 0.5]).unwrap();
        let m = BgModel::new(0.3, 2).unwrap();
        let obs = observe(&geometric_filter(0.3, 40).unwrap(), &m, 0..300, 1).unwrap();
        let res = solve_l1(&obs.y, 2, &a_tilde, &SolverConfig::default()).unwrap();
        let lhs = res.w.get(0) + 0.5 * res.w.get(-1);
        assert_abs_diff_eq!(lhs, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn observer_sees_every_iteration() {
        let m = BgModel::new(0.3, 4).unwrap();
        let obs = observe(&geometric_filter(0.4, 30).unwrap(), &m, 0..120, 0).unwrap();
        let p = L1Problem::new(&obs.y, -1, 1, &Filter::delta(0)).unwrap();
        let mut seen = Vec::new();
        let cfg = SolverConfig {
            polish_every: 0,
            max_iters: 50,
            ..Default::default()
        };
        let res = p.solve(&cfg, Some(&mut |r: &IterateRecord| seen.push(r.iter))).unwrap();
        assert_eq!(seen.len(), res.iterations);
        assert_eq!(seen.first(), Some(&1));
    }
}
