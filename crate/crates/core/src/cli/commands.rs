use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::resolve;
use super::{
    CliError, Common, Format, GenArgs, LandscapeArgs, PhaseArgs, RobustnessArgs, SamplesArgs, SelftestArgs,
    SolveArgs, StabilityArgs, ThresholdArgs,
};
use crate::error::Error;
use crate::experiments::{
    geometric_blur, phase_diagram, robustness_curve, sample_complexity_curve, stability_curve, ExperimentTable,
    PhaseGridSpec, RobustnessSpec, SampleComplexitySpec, StabilitySpec,
};
use crate::filters::{
    convolve, find_roots, inverse_error, truncated_inverse, Filter, Gain, RootFactorization,
};
use crate::signals::{observe, read_window, write_window_bin, write_window_json, BgModel, Window};
use crate::solver::{check_recovery, IterateRecord, L1Problem, Recovery, SolverConfig, SolverResult};
use crate::theory::{
    self, expected_abs_inner, objective_gap, pt_exact, support_expectation, v1_saddle, v2k_saddle,
    v_landscape_mc, LandscapeEstimate, McEstimate, Mode, ThresholdBudget, ThresholdReport, EXACT_LIMIT,
};

type CliResult<T> = Result<T, CliError>;

fn out_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::file(out, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::file(path, e))
}

/// Creates the output directory and writes `config-echo.json`.
fn start(out: &Path, config: &impl Serialize) -> CliResult<PathBuf> {
    out_dir(out)?;
    let echo = out.join("config-echo.json");
    write_json(&echo, config)?;
    Ok(echo)
}

fn resolve_args<T: Serialize + serde::de::DeserializeOwned>(
    defaults: T,
    common: &Common,
    flags: &impl Serialize,
) -> CliResult<T> {
    resolve(defaults, common.config.as_deref(), flags)
}

fn filter(offset: i64, coeffs: &[f64], what: &str) -> CliResult<Filter> {
    if coeffs.is_empty() {
        return Err(CliError::new("invalid-argument", format!("{what} needs at least one coefficient")));
    }
    Ok(Filter::new(offset, coeffs.to_vec())?)
}

fn read_input(path: &Path) -> CliResult<Window> {
    read_window(path).map_err(|e| match e {
        Error::Io(io) => CliError::file(path, io),
        Error::Json(j) => CliError::new("json", format!("{}: {j}", path.display())),
        other => other.into(),
    })
}

fn paths(list: &[&Path]) -> Value {
    json!(list.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GenConfig {
    p: f64,
    s: Option<f64>,
    a: Option<Vec<f64>>,
    offset: i64,
    t_half: usize,
    seed: u64,
    format: Format,
    out: PathBuf,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            p: 0.1,
            s: None,
            a: None,
            offset: 0,
            t_half: 200,
            seed: 0,
            format: Format::Json,
            out: ".".into(),
        }
    }
}

#[derive(Serialize)]
struct GenMeta<'a> {
    p: f64,
    seed: u64,
    a: &'a Filter,
    a_inv: Option<Filter>,
    x_start: i64,
    x_len: usize,
    y_start: i64,
    y_len: usize,
    format: Format,
}

pub(super) fn gen(args: &GenArgs) -> CliResult<Value> {
    let cfg = resolve_args(GenConfig::default(), &args.common, args)?;
    let (a, a_inv) = match (&cfg.a, cfg.s) {
        (Some(_), Some(_)) => return Err(CliError::new("invalid-argument", "give either --s or --a, not both")),
        (None, None) => return Err(CliError::new("invalid-argument", "need --s or --a")),
        (Some(c), None) => (filter(cfg.offset, c, "--a")?, None),
        (None, Some(s)) => (geometric_blur(s)?, Some(Filter::new(0, vec![1.0, -s])?)),
    };
    if cfg.t_half == 0 {
        return Err(CliError::new("invalid-argument", "T must be at least 1"));
    }
    let model = BgModel::new(cfg.p, cfg.seed)?;
    let t = cfg.t_half as i64;
    let obs = observe(&a, &model, -t..t + 1, 0)?;

    let echo = start(&cfg.out, &cfg)?;
    let (xp, yp) = match cfg.format {
        Format::Json => {
            let (xp, yp) = (cfg.out.join("x.json"), cfg.out.join("y.json"));
            write_window_json(&xp, &obs.x)?;
            write_window_json(&yp, &obs.y)?;
            (xp, yp)
        }
        Format::Bin => {
            let (xp, yp) = (cfg.out.join("x.bin"), cfg.out.join("y.bin"));
            write_window_bin(&xp, &obs.x)?;
            write_window_bin(&yp, &obs.y)?;
            (xp, yp)
        }
    };
    let meta_path = cfg.out.join("meta.json");
    write_json(
        &meta_path,
        &GenMeta {
            p: cfg.p,
            seed: cfg.seed,
            a: &a,
            a_inv,
            x_start: obs.x.start,
            x_len: obs.x.len(),
            y_start: obs.y.start,
            y_len: obs.y.len(),
            format: cfg.format,
        },
    )?;
    Ok(json!({ "outputs": paths(&[&xp, &yp, &meta_path, &echo]) }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SolveConfig {
    y: Option<PathBuf>,
    k: usize,
    lo: Option<i64>,
    hi: Option<i64>,
    a_tilde: Vec<f64>,
    a_tilde_offset: i64,
    a_inv: Option<Vec<f64>>,
    a_inv_offset: i64,
    s: Option<f64>,
    eps: f64,
    dump_iterates: bool,
    solver: SolverConfig,
    out: PathBuf,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            y: None,
            k: 1,
            lo: None,
            hi: None,
            a_tilde: vec![1.0],
            a_tilde_offset: 0,
            a_inv: None,
            a_inv_offset: 0,
            s: None,
            eps: 1e-3,
            dump_iterates: false,
            solver: SolverConfig::default(),
            out: ".".into(),
        }
    }
}

#[derive(Serialize)]
struct SolveOutput {
    lo: i64,
    hi: i64,
    result: SolverResult,
    recovery: Option<Recovery>,
}

pub(super) fn solve(args: &SolveArgs) -> CliResult<Value> {
    let cfg = resolve_args(SolveConfig::default(), &args.common, args)?;
    let y_path = cfg
        .y
        .as_ref()
        .ok_or_else(|| CliError::new("invalid-argument", "need --y"))?;
    let (lo, hi) = match (cfg.lo, cfg.hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, None) => (-(cfg.k as i64), cfg.k as i64),
        _ => return Err(CliError::new("invalid-argument", "--lo and --hi go together")),
    };
    let a_tilde = filter(cfg.a_tilde_offset, &cfg.a_tilde, "--a-tilde")?;
    let a_inv = match (&cfg.a_inv, cfg.s) {
        (Some(_), Some(_)) => return Err(CliError::new("invalid-argument", "give either --a-inv or --s, not both")),
        (Some(c), None) => Some(filter(cfg.a_inv_offset, c, "--a-inv")?),
        (None, Some(s)) => Some(Filter::new(0, vec![1.0, -s])?),
        (None, None) => None,
    };
    cfg.solver.validate()?;
    let y = read_input(y_path)?;

    let problem = L1Problem::new(&y, lo, hi, &a_tilde)?;
    let mut iterates: Vec<IterateRecord> = Vec::new();
    let result = if cfg.dump_iterates {
        let mut record = |r: &IterateRecord| iterates.push(*r);
        problem.solve(&cfg.solver, Some(&mut record))?
    } else {
        problem.solve(&cfg.solver, None)?
    };
    let recovery = a_inv
        .as_ref()
        .map(|ai| check_recovery(&result.w, ai, cfg.eps))
        .transpose()?;

    let echo = start(&cfg.out, &cfg)?;
    let result_path = cfg.out.join("result.json");
    let summary = json!({
        "objective": result.objective,
        "converged": result.converged,
        "certified": result.certified,
        "recovered": recovery.as_ref().map(|r| r.success),
    });
    write_json(&result_path, &SolveOutput { lo, hi, result, recovery })?;
    let mut outputs = vec![result_path.clone(), echo];
    if cfg.dump_iterates {
        let path = cfg.out.join("iterates.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in &iterates {
            w.serialize(r)?;
        }
        w.flush()?;
        outputs.push(path);
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    Ok(json!({ "summary": summary, "outputs": paths(&refs) }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ThresholdConfig {
    e_tilde: Option<Vec<f64>>,
    a: Option<Vec<f64>>,
    offset: i64,
    a_tilde: Vec<f64>,
    a_tilde_offset: i64,
    tol: f64,
    budget: ThresholdBudget,
    out: PathBuf,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            e_tilde: None,
            a: None,
            offset: 0,
            a_tilde: vec![1.0],
            a_tilde_offset: 0,
            tol: 1e-9,
            budget: ThresholdBudget::default(),
            out: ".".into(),
        }
    }
}

/// Truncated inverse of `a` accurate to `1e-12` in l2.
fn numerical_inverse(a: &Filter) -> CliResult<(Filter, usize)> {
    let roots = find_roots(a)?;
    let mut r = 8;
    while r <= 1 << 16 {
        let w = truncated_inverse(&roots, r)?;
        if inverse_error(a, &w) < 1e-12 {
            return Ok((w, r));
        }
        r *= 2;
    }
    Err(CliError::new(
        "insufficient-margin",
        "inverse did not reach 1e-12 accuracy; roots are too close to the unit circle",
    ))
}

#[derive(Serialize)]
struct ThresholdOutput {
    e_tilde: Filter,
    inverse_length: Option<usize>,
    report: ThresholdReport,
}

pub(super) fn threshold(args: &ThresholdArgs) -> CliResult<Value> {
    let cfg = resolve_args(ThresholdConfig::default(), &args.common, args)?;
    let (e_tilde, inverse_length) = match (&cfg.e_tilde, &cfg.a) {
        (Some(_), Some(_)) => return Err(CliError::new("invalid-argument", "give either --e-tilde or --a, not both")),
        (None, None) => return Err(CliError::new("invalid-argument", "need --e-tilde or --a")),
        (Some(e), None) => (filter(cfg.offset, e, "--e-tilde")?, None),
        (None, Some(c)) => {
            let a = filter(cfg.offset, c, "--a")?;
            let a_tilde = filter(cfg.a_tilde_offset, &cfg.a_tilde, "--a-tilde")?;
            let (inv, r) = numerical_inverse(&a)?;
            let e = convolve(&a_tilde, &inv);
            let floor = 1e-15 * e.norm_inf();
            let trimmed = e.coeffs().iter().map(|&v| if v.abs() < floor { 0.0 } else { v }).collect();
            (Filter::new(e.offset(), trimmed)?, Some(r))
        }
    };
    let report = pt_exact(&e_tilde, cfg.tol, &cfg.budget)?;
    let echo = start(&cfg.out, &cfg)?;
    let path = cfg.out.join("threshold.json");
    let summary = json!({
        "lower": report.lower,
        "upper": report.upper,
        "exact": report.exact,
        "status": report.status,
    });
    write_json(&path, &ThresholdOutput { e_tilde, inverse_length, report })?;
    Ok(json!({ "summary": summary, "outputs": paths(&[&path, &echo]) }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LandscapeConfig {
    psi: Option<Vec<f64>>,
    offset: i64,
    p: f64,
    k: i32,
    samples: u64,
    seed: u64,
    out: PathBuf,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            psi: None,
            offset: 0,
            p: 0.1,
            k: 1,
            samples: 100_000,
            seed: 0,
            out: ".".into(),
        }
    }
}

#[derive(Serialize)]
struct LandscapeOutput {
    psi: Filter,
    p: f64,
    k: i32,
    monte_carlo: LandscapeEstimate,
    /// Exact `V_k` by enumeration when the support allows it.
    exact: Option<f64>,
    /// Closed-form value when the nonzero entries share one magnitude.
    saddle: Option<f64>,
    expected_abs_inner: McEstimate,
    objective_gap: McEstimate,
}

pub(super) fn landscape(args: &LandscapeArgs) -> CliResult<Value> {
    let cfg = resolve_args(LandscapeConfig::default(), &args.common, args)?;
    let coeffs = cfg
        .psi
        .as_ref()
        .ok_or_else(|| CliError::new("invalid-argument", "need --psi"))?;
    let psi = filter(cfg.offset, coeffs, "--psi")?;
    let nz: Vec<f64> = psi.coeffs().iter().copied().filter(|&v| v != 0.0).collect();
    let n = nz.len();
    let monte_carlo = v_landscape_mc(&psi, cfg.p, cfg.k, cfg.samples, cfg.seed)?;
    let norm2 = psi.norm_l2().powi(2);
    let half_k = cfg.k as f64 / 2.0;
    let exact = if n <= EXACT_LIMIT && (cfg.k >= 0 || cfg.p > 0.0) {
        let m = support_expectation(&nz, cfg.p, Mode::Exact, |q| {
            if q == 0.0 && cfg.k != 0 {
                0.0
            } else {
                (q / norm2).powf(half_k)
            }
        })?
        .mean;
        if cfg.k < 0 {
            Some(m / (1.0 - (1.0 - cfg.p).powi(n as i32)))
        } else if cfg.k == 0 {
            Some(1.0)
        } else {
            Some(m)
        }
    } else {
        None
    };
    let top = nz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let equal = nz.iter().all(|v| (v.abs() - top).abs() <= 1e-12 * top);
    let saddle = match cfg.k {
        1 if equal => Some(v1_saddle(n, cfg.p)?),
        k if equal && k >= 2 && k % 2 == 0 => Some(v2k_saddle(n, cfg.p, (k / 2) as u32)?),
        _ => None,
    };
    let mode = Mode::auto(n + 1, cfg.samples, cfg.seed);
    let output = LandscapeOutput {
        expected_abs_inner: expected_abs_inner(&psi, cfg.p, mode)?,
        objective_gap: objective_gap(&psi, cfg.p, mode)?,
        psi,
        p: cfg.p,
        k: cfg.k,
        monte_carlo,
        exact,
        saddle,
    };
    let echo = start(&cfg.out, &cfg)?;
    let path = cfg.out.join("landscape.json");
    write_json(&path, &output)?;
    let summary = json!({
        "monte_carlo": output.monte_carlo.estimate.mean,
        "stderr": output.monte_carlo.estimate.stderr,
        "exact": output.exact,
        "saddle": output.saddle,
    });
    Ok(json!({ "summary": summary, "outputs": paths(&[&path, &echo]) }))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct SelftestConfig {
    seed: u64,
    out: PathBuf,
}

pub(super) fn selftest(args: &SelftestArgs) -> CliResult<Value> {
    let cfg = resolve_args(
        SelftestConfig {
            seed: 0,
            out: ".".into(),
        },
        &args.common,
        args,
    )?;
    let report = theory::selftest(cfg.seed);
    let echo = start(&cfg.out, &cfg)?;
    let path = cfg.out.join("selftest.json");
    write_json(&path, &report)?;
    if !report.passed {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::new(
            "selftest-failed",
            format!("failed checks: {} (details in {})", failed.join(", "), path.display()),
        ));
    }
    Ok(json!({ "passed": true, "checks": report.checks.len(), "outputs": paths(&[&path, &echo]) }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sweep<S> {
    #[serde(flatten)]
    spec: S,
    workers: Option<usize>,
    out: PathBuf,
}

impl<S> Sweep<S> {
    fn new(spec: S) -> Self {
        Self {
            spec,
            workers: None,
            out: ".".into(),
        }
    }
}

fn write_tables(out: &Path, echo: &Path, tables: &[&ExperimentTable]) -> CliResult<Value> {
    let mut outputs = Vec::new();
    let mut summary = serde_json::Map::new();
    for t in tables {
        let (csv_path, meta_path) = t.write_to(out)?;
        outputs.push(csv_path);
        outputs.push(meta_path);
        summary.insert(t.meta.kind.clone(), Value::Object(t.meta.summary.clone()));
    }
    outputs.push(echo.to_path_buf());
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    Ok(json!({ "summary": summary, "outputs": paths(&refs) }))
}

pub(super) fn phase(args: &PhaseArgs) -> CliResult<Value> {
    let cfg = resolve_args(Sweep::new(PhaseGridSpec::default()), &args.common, args)?;
    cfg.spec.validate()?;
    let echo = start(&cfg.out, &cfg)?;
    let d = phase_diagram(&cfg.spec, cfg.workers)?;
    write_tables(&cfg.out, &echo, &[&d.grid, &d.boundary])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StabilityConfig {
    s: Option<f64>,
    plus_roots: Vec<f64>,
    minus_roots: Vec<f64>,
    r_min: usize,
    r_max: usize,
    r_values: Option<Vec<usize>>,
    p: f64,
    t_half: usize,
    trials: usize,
    seed: u64,
    solver: SolverConfig,
    workers: Option<usize>,
    out: PathBuf,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            s: Some(0.5),
            plus_roots: Vec::new(),
            minus_roots: Vec::new(),
            r_min: 1,
            r_max: 16,
            r_values: None,
            p: 0.1,
            t_half: 400,
            trials: 10,
            seed: 0,
            solver: SolverConfig::default(),
            workers: None,
            out: ".".into(),
        }
    }
}

impl StabilityConfig {
    fn spec(&self) -> CliResult<StabilitySpec> {
        let roots = if self.plus_roots.is_empty() && self.minus_roots.is_empty() {
            let s = self
                .s
                .ok_or_else(|| CliError::new("invalid-argument", "need --s or explicit roots"))?;
            RootFactorization::real(&[], &[s], Gain::Fixed(1.0))?
        } else {
            RootFactorization::real(&self.minus_roots, &self.plus_roots, Gain::Fixed(1.0))?
        };
        let r_values = match &self.r_values {
            Some(r) => r.clone(),
            None if self.r_min >= 1 && self.r_min <= self.r_max => (self.r_min..=self.r_max).collect(),
            None => return Err(CliError::new("invalid-argument", "need 1 <= rmin <= rmax")),
        };
        let spec = StabilitySpec {
            roots,
            r_values,
            p: self.p,
            t_half: self.t_half,
            trials: self.trials,
            seed: self.seed,
            solver: self.solver.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub(super) fn stability(args: &StabilityArgs) -> CliResult<Value> {
    let cfg = resolve_args(StabilityConfig::default(), &args.common, args)?;
    let spec = cfg.spec()?;
    let echo = start(&cfg.out, &cfg)?;
    let t = stability_curve(&spec, cfg.workers)?;
    write_tables(&cfg.out, &echo, &[&t])
}

pub(super) fn robustness(args: &RobustnessArgs) -> CliResult<Value> {
    let cfg = resolve_args(Sweep::new(RobustnessSpec::default()), &args.common, args)?;
    cfg.spec.validate()?;
    let echo = start(&cfg.out, &cfg)?;
    let t = robustness_curve(&cfg.spec, cfg.workers)?;
    write_tables(&cfg.out, &echo, &[&t])
}

pub(super) fn samples(args: &SamplesArgs) -> CliResult<Value> {
    let cfg = resolve_args(Sweep::new(SampleComplexitySpec::default()), &args.common, args)?;
    cfg.spec.validate()?;
    let echo = start(&cfg.out, &cfg)?;
    let t = sample_complexity_curve(&cfg.spec, cfg.workers)?;
    write_tables(&cfg.out, &echo, &[&t])
}
