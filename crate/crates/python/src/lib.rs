//! Python bindings for `sparse_deconv`.
//!
//! Windows cross the boundary as `(start, values)`; filters as the `Filter`
//! class. Library errors raise `SparseDeconvError` with the error kind as a
//! prefix of the message.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sparse_deconv::experiments::{
    phase_diagram, robustness_curve, sample_complexity_curve, stability_curve, ExperimentTable, PhaseGridSpec,
    RobustnessSpec, SampleComplexitySpec, StabilitySpec,
};
use sparse_deconv::filters::{self, Gain};
use sparse_deconv::signals::{self, observe as observe_rs};
use sparse_deconv::solver::{self, L1Problem};
use sparse_deconv::theory::{self, Mode, ThresholdBudget};
use sparse_deconv::{BgModel, Error, RootFactorization, SolverConfig, Window};

create_exception!(sparse_deconv_py, SparseDeconvError, PyValueError);

fn py_err(e: Error) -> PyErr {
    SparseDeconvError::new_err(format!("{}: {e}", e.kind()))
}

fn json_err(e: serde_json::Error) -> PyErr {
    SparseDeconvError::new_err(format!("config: {e}"))
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for sparse_deconv::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Finite filter on the integers: `coeffs[i]` sits at index `offset + i`.
#[pyclass(name = "Filter", module = "sparse_deconv_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyFilter(filters::Filter);

#[pymethods]
impl PyFilter {
    #[new]
    #[pyo3(signature = (offset, coeffs))]
    fn new(offset: i64, coeffs: Vec<f64>) -> PyResult<Self> {
        filters::Filter::new(offset, coeffs).map(Self).or_raise()
    }

    #[staticmethod]
    fn delta(k: i64) -> Self {
        Self(filters::Filter::delta(k))
    }

    #[staticmethod]
    fn geometric(s: f64, length: usize) -> PyResult<Self> {
        filters::Filter::geometric(s, length).map(Self).or_raise()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(json_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }

    #[getter]
    fn offset(&self) -> i64 {
        self.0.offset()
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.0.coeffs().to_vec()
    }

    /// Last index, inclusive.
    #[getter]
    fn end(&self) -> i64 {
        self.0.end()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __getitem__(&self, t: i64) -> f64 {
        self.0.get(t)
    }

    fn __repr__(&self) -> String {
        format!("Filter(offset={}, coeffs={:?})", self.0.offset(), self.0.coeffs())
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    fn shift(&self, k: i64) -> Self {
        Self(self.0.shift(k))
    }

    fn scale(&self, alpha: f64) -> Self {
        Self(self.0.scale(alpha))
    }

    fn time_reverse(&self) -> Self {
        Self(self.0.time_reverse())
    }

    fn norm_l1(&self) -> f64 {
        self.0.norm_l1()
    }

    fn norm_l2(&self) -> f64 {
        self.0.norm_l2()
    }

    fn norm_inf(&self) -> f64 {
        self.0.norm_inf()
    }

    fn peak_index(&self) -> Option<i64> {
        self.0.peak_index()
    }

    fn peak_normalized(&self) -> PyResult<Self> {
        self.0.peak_normalized().map(Self).or_raise()
    }

    fn __add__(&self, other: &Self) -> Self {
        Self(self.0.axpy(1.0, &other.0))
    }

    fn __sub__(&self, other: &Self) -> Self {
        Self(self.0.sub(&other.0))
    }

    /// Convolution.
    fn __mul__(&self, other: &Self) -> Self {
        Self(filters::convolve(&self.0, &other.0))
    }
}

fn window(start: i64, values: Vec<f64>) -> PyResult<Window> {
    Window::new(start, values).or_raise()
}

fn roots(minus: Vec<f64>, plus: Vec<f64>, gain: Option<f64>) -> PyResult<RootFactorization> {
    let gain = gain.map_or(Gain::Normalize, Gain::Fixed);
    RootFactorization::real(&minus, &plus, gain).or_raise()
}

#[pyfunction]
fn convolve(f: &PyFilter, g: &PyFilter) -> PyFilter {
    PyFilter(filters::convolve(&f.0, &g.0))
}

#[pyfunction]
fn inverse_error(a: &PyFilter, w: &PyFilter) -> f64 {
    filters::inverse_error(&a.0, &w.0)
}

#[pyfunction]
fn deltaness(v: &PyFilter) -> PyResult<f64> {
    filters::deltaness(&v.0).or_raise()
}

#[pyfunction]
fn geometric_blur(s: f64) -> PyResult<PyFilter> {
    sparse_deconv::experiments::geometric_blur(s).map(PyFilter).or_raise()
}

/// Filter from real roots; `gain=None` normalizes the coefficient at 0.
#[pyfunction]
#[pyo3(signature = (minus_roots, plus_roots, gain=None))]
fn filter_from_roots(minus_roots: Vec<f64>, plus_roots: Vec<f64>, gain: Option<f64>) -> PyResult<PyFilter> {
    filters::filter_from_roots(&roots(minus_roots, plus_roots, gain)?).map(PyFilter).or_raise()
}

#[pyfunction]
#[pyo3(signature = (minus_roots, plus_roots, r, gain=None))]
fn truncated_inverse(minus_roots: Vec<f64>, plus_roots: Vec<f64>, r: usize, gain: Option<f64>) -> PyResult<PyFilter> {
    filters::truncated_inverse(&roots(minus_roots, plus_roots, gain)?, r).map(PyFilter).or_raise()
}

#[pyfunction]
#[pyo3(signature = (minus_roots, plus_roots, r, gain=None))]
fn truncated_inverse_error_sq(minus_roots: Vec<f64>, plus_roots: Vec<f64>, r: usize, gain: Option<f64>) -> PyResult<f64> {
    filters::truncated_inverse_error_sq(&roots(minus_roots, plus_roots, gain)?, r).or_raise()
}

/// Bernoulli-Gaussian samples on `start .. stop`.
#[pyfunction]
#[pyo3(signature = (p, seed, start, stop, stream=0))]
fn sample_bg(p: f64, seed: u64, start: i64, stop: i64, stream: u64) -> PyResult<(i64, Vec<f64>)> {
    let w = signals::sample_bg(&BgModel::new(p, seed).or_raise()?, start..stop, stream).or_raise()?;
    Ok((w.start, w.values))
}

/// `y = a ⋆ x` valid on `start .. stop`; returns `((x_start, x), (y_start, y))`.
#[pyfunction]
#[pyo3(signature = (a, p, seed, start, stop, stream=0))]
#[allow(clippy::type_complexity)]
fn observe(
    a: &PyFilter,
    p: f64,
    seed: u64,
    start: i64,
    stop: i64,
    stream: u64,
) -> PyResult<((i64, Vec<f64>), (i64, Vec<f64>))> {
    let obs = observe_rs(&a.0, &BgModel::new(p, seed).or_raise()?, start..stop, stream).or_raise()?;
    Ok(((obs.x.start, obs.x.values), (obs.y.start, obs.y.values)))
}

/// Solves the l1 program over `w` on `-k ..= k`, or on `lo ..= hi` when both
/// are given. Extra keyword arguments override solver settings.
#[pyfunction]
#[pyo3(signature = (y, start=0, k=1, lo=None, hi=None, a_tilde=None, **solver))]
#[allow(clippy::too_many_arguments)]
fn solve_l1<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    start: i64,
    k: usize,
    lo: Option<i64>,
    hi: Option<i64>,
    a_tilde: Option<&PyFilter>,
    solver: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let y = window(start, y)?;
    let (lo, hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, None) => (-(k as i64), k as i64),
        _ => return Err(SparseDeconvError::new_err("invalid-argument: lo and hi go together")),
    };
    let mut cfg = serde_json::to_value(SolverConfig::default()).map_err(json_err)?;
    if let Some(kw) = solver {
        for (key, v) in kw.iter() {
            let key: String = key.extract()?;
            if cfg.get(&key).is_none() {
                return Err(SparseDeconvError::new_err(format!("config: unknown solver setting {key}")));
            }
            cfg[&key] = if cfg[&key].is_u64() {
                serde_json::json!(v.extract::<u64>()?)
            } else {
                serde_json::json!(v.extract::<f64>()?)
            };
        }
    }
    let cfg: SolverConfig = serde_json::from_value(cfg).map_err(json_err)?;
    let a_tilde = a_tilde.map_or_else(|| filters::Filter::delta(0), |f| f.0.clone());
    let res = L1Problem::new(&y, lo, hi, &a_tilde).or_raise()?.solve(&cfg, None).or_raise()?;
    let out = PyDict::new(py);
    out.set_item("w", PyFilter(res.w))?;
    out.set_item("objective", res.objective)?;
    out.set_item("iterations", res.iterations)?;
    out.set_item("primal_residual", res.primal_residual)?;
    out.set_item("dual_residual", res.dual_residual)?;
    out.set_item("converged", res.converged)?;
    out.set_item("certified", res.certified)?;
    out.set_item("constraint_residual", res.constraint_residual)?;
    out.set_item("valid_len", res.valid_len)?;
    Ok(out)
}

/// Exact minimizer over `w = e_fixed + w1·e_free`; returns `(w1, objective, unique)`.
#[pyfunction]
#[pyo3(signature = (y, fixed, free, start=0))]
fn solve_l1_oracle_1dof(y: Vec<f64>, fixed: i64, free: i64, start: i64) -> PyResult<(f64, f64, bool)> {
    let s = solver::solve_l1_oracle_1dof(&window(start, y)?, fixed, free).or_raise()?;
    Ok((s.w1, s.objective, s.unique))
}

/// `(success, aligned_error, shift, scale)`.
#[pyfunction]
#[pyo3(signature = (w, a_inv, eps=1e-3))]
fn check_recovery(w: &PyFilter, a_inv: &PyFilter, eps: f64) -> PyResult<(bool, f64, i64, f64)> {
    let r = solver::check_recovery(&w.0, &a_inv.0, eps).or_raise()?;
    Ok((r.success, r.aligned_error, r.shift, r.scale))
}

fn mode(samples: Option<u64>, seed: u64, n: usize) -> Mode {
    match samples {
        Some(samples) => Mode::MonteCarlo { samples, seed },
        None => Mode::auto(n, 100_000, seed),
    }
}

/// `(mean, stderr)` of `E_I‖ψ_I‖₂ − p`; exact unless `samples` is given.
#[pyfunction]
#[pyo3(signature = (psi, p, samples=None, seed=0))]
fn objective_gap(psi: &PyFilter, p: f64, samples: Option<u64>, seed: u64) -> PyResult<(f64, f64)> {
    let e = theory::objective_gap(&psi.0, p, mode(samples, seed, psi.0.len())).or_raise()?;
    Ok((e.mean, e.stderr))
}

/// `(mean, stderr)` of `E|⟨ψ, X⟩|`; exact unless `samples` is given.
#[pyfunction]
#[pyo3(signature = (psi, p, samples=None, seed=0))]
fn expected_abs_inner(psi: &PyFilter, p: f64, samples: Option<u64>, seed: u64) -> PyResult<(f64, f64)> {
    let e = theory::expected_abs_inner(&psi.0, p, mode(samples, seed, psi.0.len())).or_raise()?;
    Ok((e.mean, e.stderr))
}

/// Monte Carlo `V_k(ψ)`: `(mean, stderr)`.
#[pyfunction]
#[pyo3(signature = (psi, p, k, samples=100_000, seed=0))]
fn v_landscape(psi: &PyFilter, p: f64, k: i32, samples: u64, seed: u64) -> PyResult<(f64, f64)> {
    let e = theory::v_landscape_mc(&psi.0, p, k, samples, seed).or_raise()?;
    Ok((e.estimate.mean, e.estimate.stderr))
}

#[pyfunction]
fn v1_saddle(m: usize, p: f64) -> PyResult<f64> {
    theory::v1_saddle(m, p).or_raise()
}

#[pyfunction]
fn v2k_saddle(m: usize, p: f64, k: u32) -> PyResult<f64> {
    theory::v2k_saddle(m, p, k).or_raise()
}

#[pyfunction]
fn folded_gaussian_mean(mu: f64, sigma: f64) -> PyResult<f64> {
    theory::folded_gaussian_mean(mu, sigma).or_raise()
}

#[pyfunction]
fn gaussian_noise_bound(p: f64, sigma: f64) -> PyResult<f64> {
    theory::gaussian_noise_bound(p, sigma).or_raise()
}

#[pyfunction]
fn adversarial_noise_bound(p: f64, eta: f64) -> PyResult<f64> {
    theory::adversarial_noise_bound(p, eta).or_raise()
}

#[pyfunction]
fn pt_lower(e_tilde: &PyFilter) -> PyResult<f64> {
    theory::pt_lower(&e_tilde.0).or_raise()
}

#[pyfunction]
fn pt_upper(e_tilde: &PyFilter) -> PyResult<f64> {
    theory::pt_upper(&e_tilde.0).or_raise()
}

/// Threshold report as a JSON string.
#[pyfunction]
#[pyo3(signature = (e_tilde, tol=1e-9, support_cap=12, seed=0))]
fn pt_exact(e_tilde: &PyFilter, tol: f64, support_cap: usize, seed: u64) -> PyResult<String> {
    let budget = ThresholdBudget { support_cap, seed, ..Default::default() };
    let rep = theory::pt_exact(&e_tilde.0, tol, &budget).or_raise()?;
    serde_json::to_string(&rep).map_err(json_err)
}

/// Invariant suite; returns `(passed, report_json)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn selftest(seed: u64) -> PyResult<(bool, String)> {
    let rep = theory::selftest(seed);
    Ok((rep.passed, serde_json::to_string(&rep).map_err(json_err)?))
}

fn spec<T: Default + serde::Serialize + serde::de::DeserializeOwned>(config: Option<&str>) -> PyResult<T> {
    let mut base = serde_json::to_value(T::default()).map_err(json_err)?;
    if let Some(text) = config {
        let top: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        let serde_json::Value::Object(top) = top else {
            return Err(SparseDeconvError::new_err("config: expected a JSON object"));
        };
        for (k, v) in top {
            if base.get(&k).is_none() {
                return Err(SparseDeconvError::new_err(format!("config: unknown key {k}")));
            }
            base[&k] = v;
        }
    }
    serde_json::from_value(base).map_err(json_err)
}

/// Runs an experiment sweep (`phase`, `stability`, `robustness` or
/// `samples`) from a JSON object of spec overrides. Returns a list of
/// `(kind, csv_text, summary_json)` tuples.
#[pyfunction]
#[pyo3(signature = (kind, config=None, workers=None))]
fn experiment(
    py: Python<'_>,
    kind: &str,
    config: Option<&str>,
    workers: Option<usize>,
) -> PyResult<Vec<(String, String, String)>> {
    let tables: Vec<ExperimentTable> = match kind {
        "phase" => {
            let s: PhaseGridSpec = spec(config)?;
            let d = py.detach(|| phase_diagram(&s, workers)).or_raise()?;
            vec![d.grid, d.boundary]
        }
        "stability" => {
            let s: StabilitySpec = match config {
                Some(text) => serde_json::from_str(text).map_err(json_err)?,
                None => StabilitySpec {
                    roots: roots(vec![], vec![0.5], Some(1.0))?,
                    r_values: (1..=16).collect(),
                    p: 0.1,
                    t_half: 400,
                    trials: 10,
                    seed: 0,
                    solver: SolverConfig::default(),
                },
            };
            vec![py.detach(|| stability_curve(&s, workers)).or_raise()?]
        }
        "robustness" => {
            let s: RobustnessSpec = spec(config)?;
            vec![py.detach(|| robustness_curve(&s, workers)).or_raise()?]
        }
        "samples" => {
            let s: SampleComplexitySpec = spec(config)?;
            vec![py.detach(|| sample_complexity_curve(&s, workers)).or_raise()?]
        }
        other => return Err(SparseDeconvError::new_err(format!("invalid-argument: unknown experiment {other}"))),
    };
    tables
        .into_iter()
        .map(|t| {
            let summary = serde_json::to_string(&t.meta.summary).map_err(json_err)?;
            Ok((t.meta.kind.clone(), t.to_csv_string().or_raise()?, summary))
        })
        .collect()
}

#[pymodule]
fn sparse_deconv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SparseDeconvError", m.py().get_type::<SparseDeconvError>())?;
    m.add_class::<PyFilter>()?;
    m.add_function(wrap_pyfunction!(convolve, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_error, m)?)?;
    m.add_function(wrap_pyfunction!(deltaness, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_blur, m)?)?;
    m.add_function(wrap_pyfunction!(filter_from_roots, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_inverse_error_sq, m)?)?;
    m.add_function(wrap_pyfunction!(sample_bg, m)?)?;
    m.add_function(wrap_pyfunction!(observe, m)?)?;
    m.add_function(wrap_pyfunction!(solve_l1, m)?)?;
    m.add_function(wrap_pyfunction!(solve_l1_oracle_1dof, m)?)?;
    m.add_function(wrap_pyfunction!(check_recovery, m)?)?;
    m.add_function(wrap_pyfunction!(objective_gap, m)?)?;
    m.add_function(wrap_pyfunction!(expected_abs_inner, m)?)?;
    m.add_function(wrap_pyfunction!(v_landscape, m)?)?;
    m.add_function(wrap_pyfunction!(v1_saddle, m)?)?;
    m.add_function(wrap_pyfunction!(v2k_saddle, m)?)?;
    m.add_function(wrap_pyfunction!(folded_gaussian_mean, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_noise_bound, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_noise_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pt_lower, m)?)?;
    m.add_function(wrap_pyfunction!(pt_upper, m)?)?;
    m.add_function(wrap_pyfunction!(pt_exact, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
