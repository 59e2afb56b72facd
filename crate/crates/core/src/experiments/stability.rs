use serde::{Deserialize, Serialize};

use super::{median, run_cells, Column, ExperimentTable};
use crate::error::{invalid, Result};
use crate::filters::{
    filter_from_roots, inverse_error, truncated_inverse, truncated_inverse_error_sq, Filter,
    RootFactorization,
};
use crate::signals::{derive_seed, observe, BgModel};
use crate::solver::{solve_l1_support, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySpec {
    pub roots: RootFactorization,
    pub r_values: Vec<usize>,
    pub p: f64,
    pub t_half: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl StabilitySpec {
    pub fn validate(&self) -> Result<()> {
        self.roots.validate()?;
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return Err(invalid("r values must be a nonempty list of positive integers"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid("p must lie in (0, 1]"));
        }
        if self.trials == 0 || self.t_half == 0 {
            return Err(invalid("trials and T must be at least 1"));
        }
        self.solver.validate()
    }
}

/// Least-squares slope of `ln y` against `x`, skipping nonpositive `y`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Solver error `‖w⋆ ⋆ a − e₀‖₂` against truncation length `r`, with `w`
/// restricted to `[−(r−1)N₋, (r−1)N₊]` and `ã = e₀`, next to the error of the
/// constructed truncated inverse.
pub fn stability_curve(spec: &StabilitySpec, workers: Option<usize>) -> Result<ExperimentTable> {
    spec.validate()?;
    let a = filter_from_roots(&spec.roots)?;
    let (nm, np) = (spec.roots.minus_roots.len() as i64, spec.roots.plus_roots.len() as i64);
    let nr = spec.r_values.len();
    let t = spec.t_half as i64;
    let jobs = run_cells(nr * spec.trials, workers, |i| -> Result<(f64, bool)> {
        let r = spec.r_values[i / spec.trials] as i64;
        let trial = (i % spec.trials) as u64;
        let model = BgModel::new(spec.p, derive_seed(spec.seed, trial))?;
        let obs = observe(&a, &model, -t..t + 1, 0)?;
        let res = solve_l1_support(&obs.y, -(r - 1) * nm, (r - 1) * np, &Filter::delta(0), &spec.solver)?;
        Ok((inverse_error(&a, &res.w), res.certified))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut constructed = Vec::with_capacity(nr);
    let mut direct = Vec::with_capacity(nr);
    let mut med = Vec::with_capacity(nr);
    let mut worst = Vec::with_capacity(nr);
    let mut certified = Vec::with_capacity(nr);
    for (k, &r) in spec.r_values.iter().enumerate() {
        constructed.push(truncated_inverse_error_sq(&spec.roots, r)?.sqrt());
        direct.push(inverse_error(&a, &truncated_inverse(&spec.roots, r)?));
        let cell = &jobs[k * spec.trials..(k + 1) * spec.trials];
        let mut errs: Vec<f64> = cell.iter().map(|c| c.0).collect();
        worst.push(errs.iter().copied().fold(0.0, f64::max));
        med.push(median(&mut errs));
        certified.push(cell.iter().filter(|c| c.1).count() as f64 / spec.trials as f64);
    }
    let rs: Vec<f64> = spec.r_values.iter().map(|&r| r as f64).collect();

    let mut table = ExperimentTable::new("stability", spec, spec.seed)?;
    table.push("r", Column::U64(spec.r_values.iter().map(|&r| r as u64).collect()))?;
    table.push("lo", Column::I64(spec.r_values.iter().map(|&r| -(r as i64 - 1) * nm).collect()))?;
    table.push("hi", Column::I64(spec.r_values.iter().map(|&r| (r as i64 - 1) * np).collect()))?;
    table.push("seed", Column::U64(vec![spec.seed; nr]))?;
    table.push("constructed_error", Column::F64(constructed.clone()))?;
    table.push("constructed_error_direct", Column::F64(direct))?;
    table.push("median_error", Column::F64(med.clone()))?;
    table.push("max_error", Column::F64(worst))?;
    table.push("ratio", Column::F64(med.iter().zip(&constructed).map(|(m, c)| m / c).collect()))?;
    table.push("certified_fraction", Column::F64(certified))?;
    table.summarize("log_slope", log_slope(&rs, &med))?;
    table.summarize("constructed_log_slope", log_slope(&rs, &constructed))?;
    table.summarize("reference_log_slope", spec.roots.max_modulus().ln())?;
    Ok(table)
}
