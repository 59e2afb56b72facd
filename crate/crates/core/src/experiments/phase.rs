use serde::{Deserialize, Serialize};

use super::{geometric_blur, logistic_crossing, run_cells, spearman, Column, ExperimentTable};
use crate::error::{invalid, Error, Result};
use crate::filters::Filter;
use crate::signals::{derive_seed, observe, BgModel};
use crate::solver::{check_recovery, solve_l1, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGridSpec {
    pub p_values: Vec<f64>,
    pub s_values: Vec<f64>,
    /// Half-window: observations live on `-T ..= T`.
    pub t_half: usize,
    pub trials: usize,
    pub eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for PhaseGridSpec {
    fn default() -> Self {
        Self {
            p_values: (1..20).map(|i| i as f64 * 0.05).collect(),
            s_values: (1..10).map(|i| i as f64 * 0.1).collect(),
            t_half: 200,
            trials: 20,
            eps: 1e-3,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl PhaseGridSpec {
    pub fn validate(&self) -> Result<()> {
        let open = |v: &f64| *v > 0.0 && *v < 1.0;
        if self.p_values.is_empty() || !self.p_values.iter().all(open) {
            return Err(invalid("p values must be a nonempty list inside (0, 1)"));
        }
        if self.s_values.is_empty() || !self.s_values.iter().all(open) {
            return Err(invalid("s values must be a nonempty list inside (0, 1)"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("eps must be positive"));
        }
        if self.t_half == 0 {
            return Err(invalid("T must be at least 1"));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    /// One row per `(s, p)` cell.
    pub grid: ExperimentTable,
    /// One row per `s`: logistic 50% crossing and rank correlation.
    pub boundary: ExperimentTable,
}

struct Cell {
    successes: u64,
    degenerate: u64,
    median_error: f64,
    iterations: u64,
}

fn run_cell(spec: &PhaseGridSpec, s: f64, p: f64, seed: u64) -> Result<Cell> {
    let a = geometric_blur(s)?;
    let a_inv = Filter::new(0, vec![1.0, -s])?;
    let model = BgModel::new(p, seed)?;
    let t = spec.t_half as i64;
    let mut successes = 0;
    let mut degenerate = 0;
    let mut iterations = 0;
    let mut errors = Vec::with_capacity(spec.trials);
    for trial in 0..spec.trials {
        let obs = observe(&a, &model, -t..t + 1, trial as u64)?;
        match solve_l1(&obs.y, 1, &Filter::delta(0), &spec.solver) {
            Ok(res) => {
                iterations += res.iterations as u64;
                let rec = check_recovery(&res.w, &a_inv, spec.eps)?;
                errors.push(rec.aligned_error);
                successes += rec.success as u64;
            }
            Err(Error::Degenerate(_)) => {
                degenerate += 1;
                errors.push(f64::INFINITY);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Cell {
        successes,
        degenerate,
        median_error: super::median(&mut errors),
        iterations,
    })
}

/// Empirical recovery rates over the `(s, p)` grid for `a = geometric(s)`,
/// `ã = e₀`, `k = 1`, plus a per-row logistic boundary.
pub fn phase_diagram(spec: &PhaseGridSpec, workers: Option<usize>) -> Result<PhaseDiagram> {
    spec.validate()?;
    let np = spec.p_values.len();
    let n = np * spec.s_values.len();
    let cells = run_cells(n, workers, |i| {
        let (s, p) = (spec.s_values[i / np], spec.p_values[i % np]);
        run_cell(spec, s, p, derive_seed(spec.seed, i as u64))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let trials = spec.trials as u64;
    let mut grid = ExperimentTable::new("phase", spec, spec.seed)?;
    grid.push("s", Column::F64((0..n).map(|i| spec.s_values[i / np]).collect()))?;
    grid.push("p", Column::F64((0..n).map(|i| spec.p_values[i % np]).collect()))?;
    grid.push("cell", Column::U64((0..n as u64).collect()))?;
    grid.push("cell_seed", Column::U64((0..n as u64).map(|i| derive_seed(spec.seed, i)).collect()))?;
    grid.push("trials", Column::U64(vec![trials; n]))?;
    grid.push("successes", Column::U64(cells.iter().map(|c| c.successes).collect()))?;
    grid.push(
        "success_rate",
        Column::F64(cells.iter().map(|c| c.successes as f64 / trials as f64).collect()),
    )?;
    grid.push("degenerate", Column::U64(cells.iter().map(|c| c.degenerate).collect()))?;
    grid.push("median_error", Column::F64(cells.iter().map(|c| c.median_error).collect()))?;
    grid.push(
        "mean_iterations",
        Column::F64(cells.iter().map(|c| c.iterations as f64 / trials as f64).collect()),
    )?;

    let mut rows = Vec::new();
    for (row, &s) in spec.s_values.iter().enumerate() {
        let cs = &cells[row * np..(row + 1) * np];
        let succ: Vec<u64> = cs.iter().map(|c| c.successes).collect();
        let fit = logistic_crossing(&spec.p_values, &succ, &vec![trials; np])?;
        let rates: Vec<f64> = succ.iter().map(|&k| k as f64 / trials as f64).collect();
        rows.push((s, fit, spearman(&spec.p_values, &rates)));
    }
    let mut boundary = ExperimentTable::new("phase-boundary", spec, spec.seed)?;
    boundary.push("s", Column::F64(rows.iter().map(|r| r.0).collect()))?;
    boundary.push("p_hat", Column::F64(rows.iter().map(|r| r.1.crossing).collect()))?;
    boundary.push("stderr", Column::F64(rows.iter().map(|r| r.1.stderr).collect()))?;
    boundary.push("band_lo", Column::F64(rows.iter().map(|r| r.1.crossing - r.1.stderr).collect()))?;
    boundary.push("band_hi", Column::F64(rows.iter().map(|r| r.1.crossing + r.1.stderr).collect()))?;
    boundary.push("one_sided", Column::U64(rows.iter().map(|r| r.1.one_sided as u64).collect()))?;
    boundary.push("spearman", Column::F64(rows.iter().map(|r| r.2).collect()))?;
    boundary.push("reference", Column::F64(rows.iter().map(|r| 1.0 - r.0).collect()))?;
    let worst = rows
        .iter()
        .map(|r| (r.1.crossing - (1.0 - r.0)).abs())
        .fold(0.0, f64::max);
    boundary.summarize("max_abs_deviation_from_1_minus_s", worst)?;
    Ok(PhaseDiagram { grid, boundary })
}
