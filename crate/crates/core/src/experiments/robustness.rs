use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{geometric_blur, median, run_cells, Column, ExperimentTable};
use crate::error::{invalid, Result};
use crate::filters::{convolve, Filter};
use crate::signals::{
    add_adversarial_offset, add_ma_gaussian, derive_seed, linear_process, sample_bg, source_range,
    stream_rng, BgModel,
};
use crate::solver::{solve_l1, SolverConfig};
use crate::theory::{
    adversarial_noise_bound, gaussian_noise_bound, kkt_directional, objective_gap, McEstimate, Mode,
    HALF_NORMAL_MEAN,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `X + σ·G` with i.i.d. standard normal `G`.
    Gaussian,
    /// `X + η`, a constant offset.
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSpec {
    pub kind: NoiseKind,
    pub levels: Vec<f64>,
    pub p: f64,
    /// The blur is `1/(1 − s z⁻¹)`, so `a⁻¹ = (1, −s)`.
    pub s: f64,
    pub t_half: usize,
    pub trials: usize,
    /// Monte Carlo masks when `a ⋆ w⋆` has more than 20 nonzero entries.
    pub mc_samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            levels: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            p: 0.1,
            s: 0.3,
            t_half: 400,
            trials: 10,
            mc_samples: 100_000,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl RobustnessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || !self.levels.iter().all(|l| *l >= 0.0 && l.is_finite()) {
            return Err(invalid("noise levels must be a nonempty list of nonnegative numbers"));
        }
        if !(self.p > 0.0 && self.p < 1.0) || !(self.s.abs() < 1.0) {
            return Err(invalid("need p in (0, 1) and |s| < 1"));
        }
        if self.trials == 0 || self.t_half == 0 || self.mc_samples == 0 {
            return Err(invalid("trials, T and mc_samples must be at least 1"));
        }
        self.solver.validate()
    }
}

/// Smallest directional derivative at `e₀` over unit `β ⊥ e₀` on `[−3, 3]`:
/// all one-sparse directions plus random ones.
fn bilipschitz_estimate(p: f64, seed: u64) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut rng = stream_rng(seed, 7);
    for i in 0..206 {
        let mut c: Vec<f64> = if i < 6 {
            let mut v = vec![0.0; 7];
            v[if i < 3 { i } else { i + 1 }] = 1.0;
            v
        } else {
            (0..7).map(|_| rng.sample(StandardNormal)).collect()
        };
        c[3] = 0.0;
        let beta = Filter::new(-3, c)?;
        if beta.is_zero() {
            continue;
        }
        let beta = beta.scale(1.0 / beta.norm_l2());
        best = best.min(kkt_directional(&beta, p, Mode::Exact)?.mean);
    }
    Ok(best)
}

/// Entries below this fraction of the peak are treated as zero in `a ⋆ w⋆`.
const ZERO_FLOOR: f64 = 1e-13;

fn trimmed(psi: &Filter) -> Result<Filter> {
    let floor = ZERO_FLOOR * psi.norm_inf();
    Filter::new(
        psi.offset(),
        psi.coeffs().iter().map(|&v| if v.abs() < floor { 0.0 } else { v }).collect(),
    )
}

struct Trial {
    error: f64,
    gap: McEstimate,
}

/// Recovery error and clean-objective gap of the solution computed from
/// noisy data, per noise level.
pub fn robustness_curve(spec: &RobustnessSpec, workers: Option<usize>) -> Result<ExperimentTable> {
    spec.validate()?;
    let a = geometric_blur(spec.s)?;
    let t = spec.t_half as i64;
    let y_range = -t..t + 1;
    let nl = spec.levels.len();
    let objective_units = match spec.kind {
        NoiseKind::Gaussian => 1.0,
        NoiseKind::Adversarial => HALF_NORMAL_MEAN,
    };

    let trials = run_cells(nl * spec.trials, workers, |i| -> Result<Trial> {
        let level = spec.levels[i / spec.trials];
        let trial_seed = derive_seed(spec.seed, (i % spec.trials) as u64);
        let model = BgModel::new(spec.p, trial_seed)?;
        let x = sample_bg(&model, source_range(&a, y_range.clone()), 0)?;
        let noisy = match spec.kind {
            NoiseKind::Gaussian => add_ma_gaussian(&x, level, &Filter::delta(0), trial_seed, 1)?.window,
            NoiseKind::Adversarial => add_adversarial_offset(&x, level)?,
        };
        let y = linear_process(&a, &noisy)?;
        let res = solve_l1(&y, 1, &Filter::delta(0), &spec.solver)?;
        let psi = trimmed(&convolve(&a, &res.w))?;
        let n = psi.coeffs().iter().filter(|v| **v != 0.0).count() + 1;
        let mut gap = objective_gap(&psi, spec.p, Mode::auto(n, spec.mc_samples, trial_seed))?;
        gap.mean *= objective_units;
        gap.stderr *= objective_units;
        Ok(Trial {
            error: psi.sub(&Filter::delta(0)).norm_l2(),
            gap,
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let eps_hat = bilipschitz_estimate(spec.p, spec.seed)?;
    let mut med = Vec::with_capacity(nl);
    let mut gap_mean = Vec::with_capacity(nl);
    let mut gap_se = Vec::with_capacity(nl);
    let mut bounds = Vec::with_capacity(nl);
    for (k, &level) in spec.levels.iter().enumerate() {
        let cell = &trials[k * spec.trials..(k + 1) * spec.trials];
        let mut errs: Vec<f64> = cell.iter().map(|c| c.error).collect();
        med.push(median(&mut errs));
        let n = cell.len() as f64;
        let m = cell.iter().map(|c| c.gap.mean).sum::<f64>() / n;
        let spread = if cell.len() > 1 {
            cell.iter().map(|c| (c.gap.mean - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mc = cell.iter().map(|c| c.gap.stderr.powi(2)).sum::<f64>() / (n * n);
        gap_mean.push(m);
        gap_se.push((spread / n + mc).sqrt());
        bounds.push(match spec.kind {
            NoiseKind::Gaussian => gaussian_noise_bound(spec.p, level)?,
            NoiseKind::Adversarial => adversarial_noise_bound(spec.p, level)?,
        });
    }

    // linear trend of the median error against the level
    let nf = nl as f64;
    let mx = spec.levels.iter().sum::<f64>() / nf;
    let my = med.iter().sum::<f64>() / nf;
    let sxx: f64 = spec.levels.iter().map(|l| (l - mx).powi(2)).sum();
    let sxy: f64 = spec.levels.iter().zip(&med).map(|(l, e)| (l - mx) * (e - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let top = spec
        .levels
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let trend_at_top = intercept + slope * spec.levels[top];

    let kind = match spec.kind {
        NoiseKind::Gaussian => "robustness-gaussian",
        NoiseKind::Adversarial => "robustness-adversarial",
    };
    let mut table = ExperimentTable::new(kind, spec, spec.seed)?;
    table.push("level", Column::F64(spec.levels.clone()))?;
    table.push("seed", Column::U64(vec![spec.seed; nl]))?;
    table.push("median_error", Column::F64(med.clone()))?;
    table.push("objective_gap", Column::F64(gap_mean.clone()))?;
    table.push("objective_gap_stderr", Column::F64(gap_se.clone()))?;
    table.push("bound", Column::F64(bounds.clone()))?;
    table.push("error_bound", Column::F64(bounds.iter().map(|b| b / eps_hat).collect()))?;
    table.push(
        "gap_within_bound",
        Column::U64(
            (0..nl)
                .map(|i| (gap_mean[i] <= bounds[i] + 3.0 * gap_se[i]) as u64)
                .collect(),
        ),
    )?;
    table.summarize("bilipschitz_estimate", eps_hat)?;
    table.summarize("trend_slope", slope)?;
    table.summarize("trend_intercept", intercept)?;
    table.summarize("trend_at_max_level", trend_at_top)?;
    table.summarize("error_at_max_level", med[top])?;
    Ok(table)
}
