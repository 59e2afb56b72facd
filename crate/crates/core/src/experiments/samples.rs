use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{run_cells, Column, ExperimentTable};
use crate::error::{invalid, Error, Result};
use crate::filters::{causal_inverse, Filter};
use crate::signals::{derive_seed, observe, stream_rng, BgModel};
use crate::solver::{check_recovery, solve_l1_support, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexitySpec {
    pub k_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub p: f64,
    pub trials: usize,
    /// `‖a⁻¹ − e₀‖₁`; below 1 keeps `a⁻¹` invertible.
    pub tail_l1: f64,
    pub eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for SampleComplexitySpec {
    fn default() -> Self {
        Self {
            k_values: vec![2, 4, 8, 16],
            n_values: vec![10, 15, 20, 30, 40, 60, 80, 120, 160, 240, 320],
            p: 0.2,
            trials: 20,
            tail_l1: 0.5,
            eps: 1e-3,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl SampleComplexitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) || self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(invalid("k and N values must be nonempty lists of positive integers"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) || !(self.tail_l1 >= 0.0 && self.tail_l1 < 1.0) {
            return Err(invalid("need p in (0, 1] and tail_l1 in [0, 1)"));
        }
        if self.trials == 0 || !(self.eps > 0.0) {
            return Err(invalid("trials and eps must be positive"));
        }
        self.solver.validate()
    }
}

/// `e₀` plus a seeded random causal tail on `1 ..= k` of l1 mass `tail_l1`.
pub(crate) fn random_inverse(k: usize, tail_l1: f64, seed: u64) -> Result<Filter> {
    let mut rng = stream_rng(seed, 11);
    let tail: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let mass: f64 = tail.iter().map(|v: &f64| v.abs()).sum();
    let mut c = vec![1.0];
    c.extend(tail.iter().map(|v| v * tail_l1 / mass));
    Filter::new(0, c)
}

/// Recovery rate over `(k, N)` for random causal inverses of length `k + 1`,
/// solved on the support `0 ..= k` with `ã = e₀`.
pub fn sample_complexity_curve(spec: &SampleComplexitySpec, workers: Option<usize>) -> Result<ExperimentTable> {
    spec.validate()?;
    let (nk, nn) = (spec.k_values.len(), spec.n_values.len());
    let filters = spec
        .k_values
        .iter()
        .map(|&k| {
            let a_inv = random_inverse(k, spec.tail_l1, derive_seed(spec.seed, k as u64))?;
            let a = causal_inverse(&a_inv, 1e-15, 100_000)?;
            Ok((a_inv, a))
        })
        .collect::<Result<Vec<_>>>()?;
    let ncell = nk * nn;
    let cells = run_cells(ncell, workers, |i| -> Result<u64> {
        let (ki, ni) = (i / nn, i % nn);
        let (a_inv, a) = &filters[ki];
        let (k, n) = (spec.k_values[ki] as i64, spec.n_values[ni] as i64);
        let model = BgModel::new(spec.p, derive_seed(spec.seed ^ 0x5a5a, i as u64))?;
        let mut ok = 0;
        for trial in 0..spec.trials {
            let obs = observe(a, &model, 0..n, trial as u64)?;
            match solve_l1_support(&obs.y, 0, k, &Filter::delta(0), &spec.solver) {
                Ok(res) => ok += check_recovery(&res.w, a_inv, spec.eps)?.success as u64,
                Err(Error::Degenerate(_) | Error::InsufficientMargin(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(ok)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let trials = spec.trials as u64;
    let mut table = ExperimentTable::new("samples", spec, spec.seed)?;
    table.push("k", Column::U64((0..ncell).map(|i| spec.k_values[i / nn] as u64).collect()))?;
    table.push("n", Column::U64((0..ncell).map(|i| spec.n_values[i % nn] as u64).collect()))?;
    table.push(
        "cell_seed",
        Column::U64((0..ncell).map(|i| derive_seed(spec.seed ^ 0x5a5a, i as u64)).collect()),
    )?;
    table.push("trials", Column::U64(vec![trials; ncell]))?;
    table.push("successes", Column::U64(cells.clone()))?;
    table.push("success_rate", Column::F64(cells.iter().map(|&s| s as f64 / trials as f64).collect()))?;

    let mut n90 = Vec::with_capacity(nk);
    for (ki, &k) in spec.k_values.iter().enumerate() {
        let hit = (0..nn)
            .filter(|&ni| cells[ki * nn + ni] as f64 >= 0.9 * trials as f64)
            .map(|ni| spec.n_values[ni])
            .min();
        let ratio = hit.map(|n| n as f64 / (k as f64 * (k as f64).ln()));
        n90.push(serde_json::json!({ "k": k, "n90": hit, "n90_over_k_ln_k": ratio }));
    }
    table.summarize("n90", n90)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn random_inverse_has_requested_tail() {
        let f = random_inverse(5, 0.5, 3).unwrap();
        assert_eq!(f.get(0), 1.0);
        assert_abs_diff_eq!(f.norm_l1() - 1.0, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn tiny_windows_fail() {
        let spec = SampleComplexitySpec {
            k_values: vec![4],
            n_values: vec![3, 200],
            trials: 4,
            ..Default::default()
        };
        let t = sample_complexity_curve(&spec, Some(1)).unwrap();
        let s = t.u64_column("successes").unwrap();
        assert_eq!(s[0], 0);
        assert!(s[1] >= 3, "{s:?}");
    }
}
