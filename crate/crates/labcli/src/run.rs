//! The `run` and `check` verbs.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use bsde_lab_core::estimates::{
    aggregate_seeds, apriori_full, apriori_zbound, compare_solutions, comparison_tolerance, AprioriBoundSpec, ComparisonInput,
    ComparisonWitness, EstimateReport,
};
use bsde_lab_core::generators::{check_declared, check_one, preset, CheckReport, GeneratorSpec, TerminalFn, Verdict, WeightParams};
use bsde_lab_core::scenario::{Scenario, Setup};
use bsde_lab_core::solver::{build_subdivision, write_solution, DiscreteSolution, ResidualReport, Solver};
use bsde_lab_core::timepaths::{write_paths, StoppingTimeSpec, TimeGrid};
use bsde_lab_core::wnorms::{class_d_norm, default_family, h_norm, sup_norm, terminal_norm, z_norm, NormResult};
use bsde_lab_core::LabError;

use crate::config::{EstimateKind, ExperimentConfig, GeneratorChoice, Scheme};
use crate::error::{divergence_history, CliError, EXIT_CHECK_FAILED, EXIT_DIVERGENCE, EXIT_OK};
use crate::manifest;
use crate::table::Table;

/// Truncation levels used when the scheme is `truncation` without a schedule.
pub const DEFAULT_SCHEDULE: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Generator, terminal rule and defaults resolved from a config.
pub struct Resolved {
    pub gen: GeneratorSpec,
    pub terminal: TerminalFn,
    pub stopping: StoppingTimeSpec,
    pub t_max: f64,
    pub l1: bool,
    pub params: WeightParams,
}

/// What a preset adds beyond its generator and terminal rule.
pub struct PresetDefaults {
    pub stopping: StoppingTimeSpec,
    pub t_max: f64,
    pub l1: bool,
    pub suggested_m: Option<f64>,
}

pub fn resolve_generator(choice: &GeneratorChoice, params: &WeightParams) -> Result<(GeneratorSpec, TerminalFn, Option<PresetDefaults>), CliError> {
    Ok(match choice {
        GeneratorChoice::Preset(name) => {
            let p = preset(name, params)?;
            let d = PresetDefaults { stopping: p.stopping, t_max: p.t_max, l1: p.l1, suggested_m: p.suggested_m };
            (p.gen, p.terminal, Some(d))
        }
        GeneratorChoice::Expression(e) => {
            let (g, t) = e.build()?;
            (g, t, None)
        }
    })
}

pub fn resolve(cfg: &ExperimentConfig) -> Result<Resolved, CliError> {
    // presets read β and M from the parameters, so resolve those first
    let base = cfg.params.unwrap_or_default();
    let (_, _, meta) = resolve_generator(&cfg.generator, &base)?;
    let params = match (cfg.params, &meta) {
        (Some(p), _) => p,
        (None, Some(PresetDefaults { suggested_m: Some(m), .. })) => WeightParams { m: *m, ..base },
        (None, _) => base,
    };
    let (gen, terminal, meta) = resolve_generator(&cfg.generator, &params)?;
    let (stopping, t_max, l1) = match meta {
        Some(d) => (d.stopping, d.t_max, d.l1),
        None => (StoppingTimeSpec::deterministic(cfg.grid.t_max.unwrap_or(1.0)), 1.0, false),
    };
    Ok(Resolved {
        gen,
        terminal,
        stopping: cfg.stopping.clone().unwrap_or(stopping),
        t_max: cfg.grid.t_max.unwrap_or(t_max),
        l1,
        params,
    })
}

fn setup(cfg: &ExperimentConfig, r: &Resolved, seed: u64) -> Result<Setup, CliError> {
    Ok(Setup {
        grid: TimeGrid::build(r.t_max, cfg.grid.n_steps, cfg.grid.spacing)?,
        n_paths: cfg.n_paths,
        seed,
        stopping: r.stopping.clone(),
        params: r.params,
        cap_nu: r.l1,
    })
}

/// Builds the scenario of `cfg` for `seed`.
pub fn scenario(cfg: &ExperimentConfig, r: &Resolved, seed: u64) -> Result<Scenario, CliError> {
    Ok(Scenario::build(r.gen.clone(), r.terminal.clone(), &setup(cfg, r, seed)?)?)
}

pub fn effective_scheme(cfg: &ExperimentConfig, gen: &GeneratorSpec, l1: bool) -> Scheme {
    match cfg.solver.scheme {
        Scheme::Auto if cfg.solver.truncation_schedule.is_some() => Scheme::Truncation,
        Scheme::Auto if cfg.solver.subdivision.is_some() || (l1 && gen.z_dependent) => Scheme::Subdivided,
        Scheme::Auto if gen.z_dependent => Scheme::Picard,
        Scheme::Auto => Scheme::Backward,
        s => s,
    }
}

/// Solves `gen` with terminal values `xi` on the scenario's paths.
pub fn solve(cfg: &ExperimentConfig, sc: &Scenario, gen: &GeneratorSpec, xi: &[f64], l1: bool) -> Result<DiscreteSolution, LabError> {
    let mut sc_cfg = cfg.solver.solver_config();
    let scheme = effective_scheme(cfg, gen, l1);
    if l1 && scheme == Scheme::Subdivided {
        sc_cfg.picard.l1_route = true;
    }
    let solver = Solver::new(&sc.bundle, sc.params, sc_cfg)?;
    match scheme {
        Scheme::Backward | Scheme::Auto => solver.solve_backward_zfree(gen, xi),
        Scheme::Picard => solver.solve_picard(gen, xi),
        Scheme::Subdivided => {
            let o = cfg.solver.subdivision.clone().unwrap_or_default();
            let plan = build_subdivision(&sc.bundle, &sc.params, o.n, o.q)?;
            solver.solve_subdivided(gen, xi, &plan)
        }
        Scheme::Truncation => {
            let s = cfg.solver.truncation_schedule.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
            Ok(solver.solve_via_truncation(gen, xi, &s)?.0)
        }
    }
}

fn residuals(cfg: &ExperimentConfig, sc: &Scenario, sol: &DiscreteSolution, gen: &GeneratorSpec, xi: &[f64]) -> Result<ResidualReport, LabError> {
    Solver::new(&sc.bundle, sc.params, cfg.solver.solver_config())?.residual_report(sol, gen, xi)
}

pub fn run_checks(cfg: &ExperimentConfig, sc: &Scenario) -> Result<Vec<CheckReport>, CliError> {
    let seed = cfg.seed ^ 0xC0FF_EE00;
    Ok(match &cfg.checks.assumptions {
        None => check_declared(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &sc.params, cfg.checks.probes, seed)?,
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(i, a)| check_one(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &sc.params, *a, cfg.checks.probes, seed.wrapping_add(i as u64)))
            .collect::<bsde_lab_core::Result<_>>()?,
    })
}

#[derive(Debug, Serialize)]
pub struct NormsReport {
    pub p: f64,
    pub y0: Vec<f64>,
    pub y0_std_error: Vec<f64>,
    pub terminal: NormResult,
    pub sup_y: NormResult,
    pub z: NormResult,
    pub h: NormResult,
    pub class_d: NormResult,
    pub censored_fraction: f64,
    /// Mean and max of `e^{∫_0^{t_max} a}` over censored paths.
    pub tail_weight_mean: f64,
    pub tail_weight_max: f64,
    pub residual_mean_abs: f64,
    pub residual_max_abs: f64,
    pub terminal_mismatch: f64,
}

fn norms(sc: &Scenario, sol: &DiscreteSolution, res: &ResidualReport) -> Result<NormsReport, LabError> {
    let (b, k, d, p) = (&sc.bundle, sol.k, sol.d, sc.params.p);
    let n = b.n_paths as f64;
    let y0 = sol.y0();
    // plain Monte Carlo error of `Y_0 = E[ξ + ∫g]`, read off `Y_0 + Σ Z ΔB`
    let y0_std_error = (0..k)
        .map(|a| {
            let v: Vec<f64> = (0..b.n_paths)
                .map(|q| {
                    let mart: f64 = (0..b.tau[q])
                        .map(|i| sol.z_at(q, i)[a * d..(a + 1) * d].iter().zip(b.db(q, i)).map(|(z, w)| z * w).sum::<f64>())
                        .sum();
                    sol.y_at(q, 0)[a] + mart
                })
                .collect();
            let m = v.iter().sum::<f64>() / n;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0) / n).sqrt()
        })
        .collect();
    let last = b.n_nodes() - 1;
    let tail: Vec<f64> = (0..b.n_paths).filter(|&q| b.censored[q]).map(|q| sc.full.weight[q * b.n_nodes() + last]).collect();
    Ok(NormsReport {
        p,
        y0,
        y0_std_error,
        terminal: terminal_norm(b, &sc.xi, k, &sc.full, p)?,
        sup_y: sup_norm(b, &sol.y, k, &sc.full, p, None)?,
        z: z_norm(b, &sol.z, k * d, &sc.full, p, None)?,
        h: h_norm(b, &sol.y, &sol.z, k, d, &sc.full, p, None)?,
        class_d: class_d_norm(b, &sol.y, k, &sc.full, &default_family(b))?,
        censored_fraction: b.censored_fraction(),
        tail_weight_mean: if tail.is_empty() { 0.0 } else { tail.iter().sum::<f64>() / tail.len() as f64 },
        tail_weight_max: tail.iter().copied().fold(0.0, f64::max),
        residual_mean_abs: res.mean_abs,
        residual_max_abs: res.max_abs,
        terminal_mismatch: res.terminal_mismatch,
    })
}

#[derive(Debug, Serialize)]
pub struct EstimateEntry {
    pub kind: EstimateKind,
    pub reports: Vec<EstimateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<EstimateReport>,
}

fn estimate(kind: EstimateKind, sc: &Scenario, sol: &DiscreteSolution) -> Result<EstimateReport, LabError> {
    let spec = AprioriBoundSpec::from_generator(&sc.gen, &sc.bundle, &sc.params)?;
    match kind {
        EstimateKind::ZBound => apriori_zbound(sol, &spec, &sc.bundle, &sc.params, 0),
        EstimateKind::FullBound => apriori_full(sol, &spec, &sc.bundle, 0),
    }
}

#[derive(Debug, Serialize)]
pub struct ComparisonEntry {
    pub lower: String,
    pub upper: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<ComparisonWitness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    CheckFailed,
    Diverged,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => EXIT_OK,
            RunStatus::CheckFailed => EXIT_CHECK_FAILED,
            RunStatus::Diverged => EXIT_DIVERGENCE,
        }
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub status: RunStatus,
    pub failures: Vec<String>,
    pub summary: Table,
}

/// Files that depend on the run's wall clock or thread pool.
pub const VOLATILE: [&str; 2] = ["run.json", manifest::MANIFEST];

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Other(format!("{name}: {e}")))?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn write_plot(dir: &Path, name: &str, header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> Result<(), CliError> {
    let mut s = format!("{header}\n");
    for (x, y) in rows {
        let _ = writeln!(s, "{x},{y:e}");
    }
    fs::write(dir.join(name), s)?;
    Ok(())
}

fn log10_rows(h: &[f64]) -> Vec<(f64, f64)> {
    h.iter().enumerate().map(|(i, d)| ((i + 1) as f64, d.log10())).collect()
}

/// A fresh `<out>/<name>-<timestamp>-s<seed>` directory.
pub fn fresh_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = cfg.out.join(format!("{}-{stamp}-s{}", cfg.name, cfg.seed));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct RunInfo {
    created_at: String,
    version: &'static str,
    threads: usize,
    status: RunStatus,
}

fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Executes `cfg` into `dir` (created if missing).
pub fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let r = resolve(cfg)?;
    let sc = scenario(cfg, &r, cfg.seed)?;
    fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
    write_paths(&sc.bundle, BufWriter::new(fs::File::create(dir.join("paths.bin"))?))?;

    let mut summary = Table::new(&["section", "item", "value", "std_error", "note"]);
    let mut failures = Vec::new();

    let checks = run_checks(cfg, &sc)?;
    for c in &checks {
        summary.row(&["check", &c.assumption, &fmt(c.worst_margin), "", &format!("{:?}", c.verdict).to_lowercase()]);
        if c.verdict == Verdict::Fail {
            failures.push(format!("assumption {} failed", c.assumption));
        }
    }
    write_json(dir, "checks.json", &checks)?;

    let sol = match solve(cfg, &sc, &sc.gen, &sc.xi, r.l1) {
        Ok(s) => s,
        Err(e) => {
            if let Some(h) = divergence_history(&e) {
                write_json(dir, "divergence.json", &serde_json::json!({ "error": e.to_string(), "picard_history": h }))?;
                write_plot(dir, "plot_picard.csv", "iteration,log10_distance", log10_rows(h))?;
                summary.row(&["solver", "diverged", &h.len().to_string(), "", &e.to_string()]);
                fs::write(dir.join("summary.csv"), summary.to_csv())?;
                finish(dir, RunStatus::Diverged)?;
                return Ok(RunOutcome { dir: dir.to_path_buf(), status: RunStatus::Diverged, failures: vec![e.to_string()], summary });
            }
            return Err(e.into());
        }
    };
    write_solution(&sol, BufWriter::new(fs::File::create(dir.join("solution.bin"))?))?;
    write_json(dir, "solution.json", &sol.meta)?;
    let m = &sol.meta;
    summary.row(&["solver", "scheme", &m.scheme, "", if m.converged { "converged" } else { "not converged" }]);
    summary.row(&["solver", "iterations", &m.iterations.to_string(), "", ""]);
    if let Some(f) = m.fitted_ratio {
        summary.row(&["solver", "fitted_ratio", &fmt(f), "", ""]);
    }
    if !m.picard_history.is_empty() {
        write_plot(dir, "plot_picard.csv", "iteration,log10_distance", log10_rows(&m.picard_history))?;
    }
    if !m.cauchy_history.is_empty() {
        let rows = m.schedule[1..].iter().zip(&m.cauchy_history).map(|(n, d)| (*n, *d));
        write_plot(dir, "plot_cauchy.csv", "n,distance", rows)?;
        for (n, d) in m.schedule[1..].iter().zip(&m.cauchy_history) {
            summary.row(&["truncation", &format!("distance_to_n={n}"), &fmt(*d), "", ""]);
        }
    }
    for (j, h) in m.interval_histories.iter().enumerate() {
        if h.len() > 1 || h.first().is_some_and(|v| *v > 0.0) {
            write_plot(dir, &format!("plot_interval_{}.csv", j + 1), "iteration,log10_distance", log10_rows(h))?;
        }
    }
    write_plot(dir, "plot_residual.csv", "node,rms", m.node_residual_rms.iter().enumerate().map(|(i, v)| (i as f64, *v)))?;

    let res = residuals(cfg, &sc, &sol, &sc.gen, &sc.xi)?;
    if cfg.checks.norms {
        let n = norms(&sc, &sol, &res)?;
        for (a, (v, se)) in n.y0.iter().zip(&n.y0_std_error).enumerate() {
            summary.row(&["norm", &format!("y0[{}]", a + 1), &fmt(*v), &fmt(*se), ""]);
        }
        for (name, nr) in [("terminal", &n.terminal), ("sup_y", &n.sup_y), ("z", &n.z), ("h", &n.h), ("class_d", &n.class_d)] {
            let note = format!("{} saturated", nr.n_saturated);
            summary.row(&["norm", name, &fmt(nr.value), &fmt(nr.std_error), &note]);
        }
        summary.row(&["diagnostic", "censored_fraction", &fmt(n.censored_fraction), "", ""]);
        summary.row(&["diagnostic", "residual_mean_abs", &fmt(n.residual_mean_abs), "", ""]);
        write_json(dir, "norms.json", &n)?;
    }

    if !cfg.checks.estimates.is_empty() {
        let mut extra = Vec::new();
        for &s in cfg.checks.estimate_seeds.iter().filter(|&&s| s != cfg.seed) {
            let other = scenario(cfg, &r, s)?;
            let sol_s = solve(cfg, &other, &other.gen, &other.xi, r.l1)?;
            extra.push((other, sol_s));
        }
        let mut entries = Vec::new();
        for &kind in &cfg.checks.estimates {
            let mut reports = vec![estimate(kind, &sc, &sol)?];
            for (o, s) in &extra {
                reports.push(estimate(kind, o, s)?);
            }
            let aggregate = if reports.len() > 1 { Some(aggregate_seeds(&reports)?) } else { None };
            let top = aggregate.as_ref().unwrap_or(&reports[0]);
            let note = format!("{} {:?}", top.inequality, top.verdict).to_lowercase();
            summary.row(&["estimate", kind.label(), &fmt(top.empirical_ratio), "", &note]);
            entries.push(EstimateEntry { kind, reports, aggregate });
        }
        write_json(dir, "estimates.json", &entries)?;
    }

    if let Some(req) = &cfg.checks.comparison {
        let (gb, tb, _) = resolve_generator(&req.other, &sc.params)?;
        let other = Scenario::on_bundle(sc.bundle.clone(), gb, tb, &setup(cfg, &r, cfg.seed)?)?;
        let entry = if other.bundle.tau != sc.bundle.tau {
            ComparisonEntry { lower: sc.gen.name.clone(), upper: other.gen.name.clone(), witness: None, error: Some("the two equations stop at different times".into()) }
        } else {
            let sol_b = solve(cfg, &other, &other.gen, &other.xi, r.l1)?;
            let rb = residuals(cfg, &other, &sol_b, &other.gen, &other.xi)?;
            let tol = comparison_tolerance(&res, &rb);
            let a = ComparisonInput { sol: &sol, xi: &sc.xi, gen: &sc.gen };
            let b = ComparisonInput { sol: &sol_b, xi: &other.xi, gen: &other.gen };
            match compare_solutions(a, b, req.side, &sc.bundle, &sc.params, &sc.full, tol, req.enforce_preconditions) {
                Ok(w) => ComparisonEntry { lower: sc.gen.name.clone(), upper: other.gen.name.clone(), witness: Some(w), error: None },
                Err(e @ LabError::Precondition(_)) => ComparisonEntry { lower: sc.gen.name.clone(), upper: other.gen.name.clone(), witness: None, error: Some(e.to_string()) },
                Err(e) => return Err(e.into()),
            }
        };
        match (&entry.witness, &entry.error) {
            (Some(w), _) => {
                summary.row(&["comparison", "violations", &w.n_violations.to_string(), "", &format!("tol_comp {}", fmt(w.tol_comp))]);
                if w.n_violations > 0 {
                    failures.push(format!("comparison has {} violations", w.n_violations));
                }
            }
            (None, Some(e)) => {
                summary.row(&["comparison", "error", "", "", e]);
                failures.push(e.clone());
            }
            (None, None) => {}
        }
        write_json(dir, "comparison.json", &entry)?;
    }

    fs::write(dir.join("summary.csv"), summary.to_csv())?;
    let status = if failures.is_empty() { RunStatus::Ok } else { RunStatus::CheckFailed };
    finish(dir, status)?;
    Ok(RunOutcome { dir: dir.to_path_buf(), status, failures, summary })
}

fn finish(dir: &Path, status: RunStatus) -> Result<(), CliError> {
    let info = RunInfo {
        created_at: chrono::Local::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION"),
        threads: current_threads(),
        status,
    };
    write_json(dir, "run.json", &info)?;
    manifest::write(dir)
}

/// Runs `cfg` into a fresh timestamped directory under `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let dir = fresh_dir(cfg)?;
    let out = run_into(cfg, &dir);
    if out.is_err() {
        // a failed run leaves no half-written directory behind
        let _ = fs::remove_dir_all(&dir);
    }
    out
}

/// Assumption checks only; nothing is written.
pub fn check(cfg: &ExperimentConfig) -> Result<(Vec<CheckReport>, Table), CliError> {
    cfg.validate()?;
    let r = resolve(cfg)?;
    let sc = scenario(cfg, &r, cfg.seed)?;
    let reps = run_checks(cfg, &sc)?;
    let mut t = Table::new(&["assumption", "verdict", "probes", "skipped", "worst_margin", "note"]);
    for c in &reps {
        t.row(&[&c.assumption, &format!("{:?}", c.verdict).to_lowercase(), &c.n_probes.to_string(), &c.n_skipped.to_string(), &fmt(c.worst_margin), &c.note]);
    }
    Ok((reps, t))
}

pub fn fmt(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e6) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}
