//! Reproducible sweeps over the solver: phase diagram, stability decay,
//! noise robustness and sample complexity.
//!
//! Every sweep is a list of independent cells. Cell `i` draws its randomness
//! from `derive_seed(seed, i)`, cells run on a bounded rayon pool, and results
//! are collected in cell order, so output is identical for any worker count.

mod phase;
mod robustness;
mod samples;
mod stability;
mod stats;
mod table;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::filters::{geometric_filter, Filter};

pub use phase::{phase_diagram, PhaseDiagram, PhaseGridSpec};
pub use robustness::{robustness_curve, NoiseKind, RobustnessSpec};
pub use samples::{sample_complexity_curve, SampleComplexitySpec};
pub use stability::{stability_curve, StabilitySpec};
pub use stats::{logistic_crossing, spearman, LogisticCrossing};
pub use table::{Column, ExperimentTable, TableMeta};

/// Environment variable capping the number of worker threads.
pub const WORKERS_ENV: &str = "SPARSE_DECONV_WORKERS";

/// Explicit count, else `SPARSE_DECONV_WORKERS`, else the rayon default.
pub fn resolve_workers(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n: &usize| n > 0)
    })
}

/// Runs `job(i)` for `i in 0..n` on at most `workers` threads; results come
/// back in index order.
pub fn run_cells<T, F>(n: usize, workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = resolve_workers(workers) {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&job).collect()))
}

/// Length at which `|s|^L` drops below `1e-12`.
pub fn effective_length(s: f64) -> usize {
    if s == 0.0 {
        return 1;
    }
    (12.0 / -s.abs().log10()).ceil().max(1.0) as usize
}

/// The forward filter `1/(1 − s z⁻¹)` truncated at [`effective_length`].
pub fn geometric_blur(s: f64) -> Result<Filter> {
    geometric_filter(s, effective_length(s))
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
