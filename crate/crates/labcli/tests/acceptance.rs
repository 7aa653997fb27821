//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs at desk scale (10⁴ paths, 100 steps) unless a criterion says
//! otherwise. Tolerances are fixed constants below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bsde_lab::config::ExperimentConfig;
use bsde_lab::run::{run_into, RunStatus};
use bsde_lab::{in_pool, replay};
use bsde_lab_core::estimates::{
    aggregate_seeds, apriori_full, apriori_zbound, compare_solutions, comparison_tolerance, AprioriBoundSpec, ComparisonInput,
    ComparisonSide, EstimateReport, EstimateVerdict, MAX_SPREAD,
};
use bsde_lab_core::generators::{
    check_declared, check_one, counterexamples, gallery_names, preset, reevaluate_witness, truncate, GeneratorSpec, Process, TerminalCtx,
    TerminalFn, Verdict, WeightParams,
};
use bsde_lab_core::scenario::{Scenario, Setup};
use bsde_lab_core::solver::{build_subdivision, DiscreteSolution, PicardConfig, Solver, SolverConfig};
use bsde_lab_core::timepaths::{NodeState, PathBundle, StoppingTimeSpec, TimeGrid, WeightTrack, WeightVariant};
use bsde_lab_core::wnorms::{sup_norm, terminal_norm, z_norm};

const PATHS: usize = 10_000;
const STEPS: usize = 100;
const SEEDS: [u64; 3] = [1, 2, 3];

// criterion 1
const Y0_SE_MULT: f64 = 3.0;
const Z_MEAN_DEV: f64 = 0.05;
const DRIFT_MAX_DEV: f64 = 1e-3;
const DECAY_DEV: f64 = 5e-3;
// criterion 2
const NORM_REL: f64 = 1e-12;
const NORM_CASES: u64 = 2_000;
// criterion 3
const CAUCHY_SCHEDULE: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
const CAUCHY_LAST_OVER_FIRST: f64 = 0.25;
// criterion 4
const RATIO_GROWTH: f64 = 1.10;
// criterion 5
const COMPARISON_PATHS: usize = 2_000;
// criterion 6
const DRIFT_RATIO_DEV: f64 = 1e-3;
// criterion 8
const REPLAY_THREADS: [usize; 2] = [1, 8];
// criterion 9
const TRUNC_CASES: usize = 100_000;
const TRUNC_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn params_for(name: &str) -> WeightParams {
    let base = WeightParams::default();
    let m = preset(name, &base).unwrap().suggested_m.unwrap_or(base.m);
    WeightParams { m, ..base }
}

fn solver(sc: &Scenario, cfg: SolverConfig) -> Solver<'_> {
    Solver::new(&sc.bundle, sc.params, cfg).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1. Closed forms

fn closed_forms() -> Outcome {
    let pr = WeightParams::default();
    let sc = Scenario::from_preset("martingale", PATHS, STEPS, 11, &pr).map_err(err)?;
    let sol = solver(&sc, SolverConfig::default()).solve_backward_zfree(&sc.gen, &sc.xi).map_err(err)?;
    let n = PATHS as f64;
    let m = sc.xi.iter().sum::<f64>() / n;
    let se = (sc.xi.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let y0 = sol.y0()[0];
    ensure(y0.abs() <= Y0_SE_MULT * se, || format!("g=0: |Y0| = {y0:e} > {Y0_SE_MULT} SE = {:e}", Y0_SE_MULT * se))?;
    let zdev = sol.z.iter().map(|z| (z - 1.0).abs()).sum::<f64>() / sol.z.len() as f64;
    ensure(zdev <= Z_MEAN_DEV, || format!("g=0: mean |Z-1| = {zdev}"))?;

    let sc = Scenario::from_preset("drift", PATHS, STEPS, 12, &pr).map_err(err)?;
    let sol = solver(&sc, SolverConfig::default()).solve_backward_zfree(&sc.gen, &sc.xi).map_err(err)?;
    let mut ddev = 0.0f64;
    for p in 0..sol.n_paths {
        for (i, t) in sc.bundle.grid.nodes.iter().enumerate() {
            ddev = ddev.max((sol.y_at(p, i)[0] - (1.0 - t)).abs());
        }
    }
    ensure(ddev <= DRIFT_MAX_DEV, || format!("g=1: max |Y - (1-t)| = {ddev:e}"))?;

    let sc = Scenario::from_preset("decay", PATHS, STEPS, 13, &pr).map_err(err)?;
    let sol = solver(&sc, SolverConfig::default()).solve_backward_zfree(&sc.gen, &sc.xi).map_err(err)?;
    // scalar backward recursion of the implicit step y_i = y_{i+1} - Δ y_i
    let mut oracle = 1.0;
    for i in (0..STEPS).rev() {
        oracle /= 1.0 + sc.bundle.grid.dt(i);
    }
    let y0d = sol.y0()[0];
    ensure((y0d - oracle).abs() <= 1e-10, || format!("g=-y: Y0 = {y0d} vs recursion {oracle}"))?;
    ensure((y0d - (-1f64).exp()).abs() <= DECAY_DEV, || format!("g=-y: |Y0 - e^-1| = {:e}", (y0d - (-1f64).exp()).abs()))?;
    Ok(format!("|Y0|/SE = {:.2}, mean|Z-1| = {zdev:.4}, drift dev = {ddev:.1e}, |Y0-e^-1| = {:.1e}", y0.abs() / se, (y0d - (-1f64).exp()).abs()))
}

// 2. Norm oracle

struct NormCase {
    bundle: PathBundle,
    weights: WeightTrack,
    a: Vec<f64>,
    xi: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    k: usize,
    d: usize,
}

fn norm_case(seed: u64) -> NormCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_paths = rng.random_range(1..=3);
    let n_steps = rng.random_range(1..=3);
    let (k, d) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let grid = TimeGrid::uniform(rng.random_range(0.25..3.0), n_steps).unwrap();
    let inc = (0..n_paths * n_steps * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut bundle = PathBundle::from_increments(grid, n_paths, d, seed, inc).unwrap();
    bundle.tau = (0..n_paths).map(|_| rng.random_range(0..=n_steps)).collect();
    let nn = n_steps + 1;
    let a: Vec<f64> = (0..n_paths * nn).map(|_| rng.random_range(0.0..2.0)).collect();
    let weights = WeightTrack::from_exponent(&bundle, WeightVariant::Custom, a.clone()).unwrap();
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-4.0..4.0)).collect::<Vec<f64>>();
    let (xi, y, z) = (draw(n_paths * k), draw(n_paths * nn * k), draw(n_paths * n_steps * k * d));
    NormCase { bundle, weights, a, xi, y, z, k, d }
}

/// `(1/N Σ X_q)^(1∧1/p)` with `X_q` from `f`.
fn bf_outer(n: usize, p: f64, f: impl Fn(usize) -> f64) -> f64 {
    let mean = (0..n).map(f).sum::<f64>() / n as f64;
    mean.powf(if p >= 1.0 { 1.0 / p } else { 1.0 })
}

fn bf_norms(c: &NormCase, p: f64) -> [f64; 3] {
    let nn = c.bundle.n_nodes();
    let ns = nn - 1;
    let h = c.bundle.grid.t_max / ns as f64;
    let len = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let w = |q: usize, i: usize| (0..i.min(c.bundle.tau[q])).map(|j| c.a[q * nn + j] * h).sum::<f64>().exp();
    let n = c.bundle.n_paths;
    let tau = &c.bundle.tau;
    let term = bf_outer(n, p, |q| (w(q, tau[q]) * len(&c.xi[q * c.k..(q + 1) * c.k])).powf(p));
    let sup = bf_outer(n, p, |q| (0..=tau[q]).map(|i| w(q, i) * len(&c.y[(q * nn + i) * c.k..(q * nn + i + 1) * c.k])).fold(0.0, f64::max).powf(p));
    let kd = c.k * c.d;
    let z = bf_outer(n, p, |q| {
        (0..tau[q]).map(|i| (w(q, i) * len(&c.z[(q * ns + i) * kd..(q * ns + i + 1) * kd])).powi(2) * h).sum::<f64>().powf(p / 2.0)
    });
    [term, sup, z]
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn norm_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..NORM_CASES {
        let c = norm_case(seed);
        for p in [0.5, 1.0, 2.0, 3.0] {
            let lib = [
                terminal_norm(&c.bundle, &c.xi, c.k, &c.weights, p).map_err(err)?.value,
                sup_norm(&c.bundle, &c.y, c.k, &c.weights, p, None).map_err(err)?.value,
                z_norm(&c.bundle, &c.z, c.k * c.d, &c.weights, p, None).map_err(err)?.value,
            ];
            for (j, (l, b)) in lib.iter().zip(bf_norms(&c, p)).enumerate() {
                let r = rel(*l, b);
                worst = worst.max(r);
                ensure(r <= NORM_REL, || format!("case {seed} p {p} norm {j}: {l} vs {b}"))?;
            }
        }
    }
    Ok(format!("{NORM_CASES} bundles × 4 exponents, worst relative error {worst:.1e}"))
}

// 3. Truncation Cauchy property (solutions are reused by 6)

struct TruncRun {
    sc: Scenario,
    sol: DiscreteSolution,
    distances: Vec<f64>,
}

fn ex310_runs() -> &'static Result<Vec<TruncRun>, String> {
    static RUNS: OnceLock<Result<Vec<TruncRun>, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let pr = params_for("ex3.10");
        SEEDS
            .iter()
            .map(|&s| {
                let sc = Scenario::from_preset("ex3.10", PATHS, STEPS, s, &pr).map_err(err)?;
                let (sol, distances) = solver(&sc, SolverConfig::default()).solve_via_truncation(&sc.gen, &sc.xi, &CAUCHY_SCHEDULE).map_err(err)?;
                Ok(TruncRun { sc, sol, distances })
            })
            .collect()
    })
}

fn cauchy_verdict(d: &[f64]) -> bool {
    d.len() == CAUCHY_SCHEDULE.len() - 1
        && d.iter().all(|v| v.is_finite())
        && d[1..].windows(2).all(|w| w[1] <= w[0])
        && d[d.len() - 1] <= CAUCHY_LAST_OVER_FIRST * d[0]
}

fn truncation_cauchy() -> Outcome {
    let runs = ex310_runs().as_ref().map_err(|e| e.clone())?;
    let verdicts: Vec<bool> = runs.iter().map(|r| cauchy_verdict(&r.distances)).collect();
    let shown: Vec<String> = runs.iter().map(|r| r.distances.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join("/")).collect();
    ensure(verdicts.iter().all(|v| *v), || format!("verdicts {verdicts:?}, distances {shown:?}"))?;
    Ok(format!("distances per seed {shown:?}"))
}

// 4. Subdivision contraction

fn subdivision_contraction() -> Outcome {
    let name = "ex4.6";
    let pr = params_for(name);
    let sc = Scenario::from_preset(name, PATHS, STEPS, 1, &pr).map_err(err)?;
    bsde_lab_core::solver::verify_l1_cap(&sc.bundle, pr.m).map_err(err)?;
    let cfg = SolverConfig { picard: PicardConfig { l1_route: true, ..PicardConfig::default() }, ..SolverConfig::default() };
    let s = solver(&sc, cfg);
    let mut ratios = Vec::new();
    for n in [4, 8] {
        let plan = build_subdivision(&sc.bundle, &sc.params, n, 2.0).map_err(err)?;
        let sol = s.solve_subdivided(&sc.gen, &sc.xi, &plan).map_err(err)?;
        let r = sol.meta.fitted_ratio.ok_or(format!("N = {n}: no fitted ratio"))?;
        ensure(sol.meta.converged, || format!("N = {n}: not converged"))?;
        ensure(r < 1.0, || format!("N = {n}: fitted ratio {r}"))?;
        ratios.push(r);
    }
    ensure(ratios[1] <= RATIO_GROWTH * ratios[0], || format!("ratio grew from {} to {}", ratios[0], ratios[1]))?;
    Ok(format!("{name}: fitted ratio N=4 {:.3}, N=8 {:.3}", ratios[0], ratios[1]))
}

// 5. Comparison controls

fn linear_driver(name: &str, c: f64) -> GeneratorSpec {
    GeneratorSpec::new(name, 1, 1, false, Arc::new(move |_: &NodeState, y: &[f64], _: &[f64], o: &mut [f64]| o[0] = c - y[0]))
        .with_constant(Process::Mu, 0.0)
        .with_constant(Process::Nu, 0.0)
}

fn comparison_controls() -> Outcome {
    let pr = WeightParams::default();
    let b1: TerminalFn = Arc::new(|c: &TerminalCtx, o: &mut [f64]| o[0] = c.state.b[0]);
    let setup = Setup {
        grid: TimeGrid::uniform(1.0, STEPS).map_err(err)?,
        n_paths: COMPARISON_PATHS,
        seed: 21,
        stopping: StoppingTimeSpec::deterministic(1.0),
        params: pr,
        cap_nu: false,
    };
    let (g, gp, ga) = (linear_driver("g", -0.5), linear_driver("g'", 0.0), linear_driver("g'+1", 1.0));
    let sc = Scenario::build(gp.clone(), b1, &setup).map_err(err)?;
    let s = solver(&sc, SolverConfig::default());
    let xi_p = sc.xi.clone();
    let xi_low: Vec<f64> = xi_p.iter().map(|x| x.min(0.0) - 0.1).collect();
    let solve = |gen: &GeneratorSpec, xi: &[f64]| -> Result<(DiscreteSolution, _), String> {
        let sol = s.solve_backward_zfree(gen, xi).map_err(err)?;
        let rep = s.residual_report(&sol, gen, xi).map_err(err)?;
        Ok((sol, rep))
    };
    let (s_low, r_low) = solve(&g, &xi_low)?;
    let (s_p, r_p) = solve(&gp, &xi_p)?;
    let (s_a, r_a) = solve(&ga, &xi_p)?;
    let inp = |sol, xi, gen| ComparisonInput { sol, xi, gen };
    let tol = comparison_tolerance(&r_low, &r_p);
    let pos = compare_solutions(inp(&s_low, &xi_low, &g), inp(&s_p, &xi_p, &gp), ComparisonSide::I, &sc.bundle, &pr, &sc.full, tol, true)
        .map_err(err)?;
    ensure(pos.n_violations == 0, || format!("positive control: {} violations at tol {tol:e}", pos.n_violations))?;
    let tol_n = comparison_tolerance(&r_a, &r_p);
    let neg = compare_solutions(inp(&s_a, &xi_p, &ga), inp(&s_p, &xi_p, &gp), ComparisonSide::I, &sc.bundle, &pr, &sc.full, tol_n, false)
        .map_err(err)?;
    ensure(neg.n_violations > 0, || "negative control: empty violation set".into())?;
    Ok(format!(
        "{COMPARISON_PATHS} paths: positive {} of {} violate (tol {tol:.1e}), negative {} violate (max u+ {:.3})",
        pos.n_violations, pos.n_checked, neg.n_violations, neg.max_u_plus
    ))
}

// 6. A priori estimate ratios

fn estimate_for(name: &str, seed: u64, full: bool) -> Result<EstimateReport, String> {
    let pr = params_for(name);
    let sc = Scenario::from_preset(name, PATHS, STEPS, seed, &pr).map_err(err)?;
    let sol = solver(&sc, SolverConfig::default()).solve_backward_zfree(&sc.gen, &sc.xi).map_err(err)?;
    let spec = AprioriBoundSpec::from_generator(&sc.gen, &sc.bundle, &pr).map_err(err)?;
    if full {
        apriori_full(&sol, &spec, &sc.bundle, 0).map_err(err)
    } else {
        apriori_zbound(&sol, &spec, &sc.bundle, &pr, 0).map_err(err)
    }
}

fn stable(label: &str, reports: &[EstimateReport]) -> Result<EstimateReport, String> {
    let agg = aggregate_seeds(reports).map_err(err)?;
    ensure(agg.per_seed_ratios.iter().all(|r| r.is_finite()), || format!("{label}: non-finite ratio {:?}", agg.per_seed_ratios))?;
    ensure(agg.verdict == EstimateVerdict::Bounded, || format!("{label}: spread above {MAX_SPREAD} in {:?}", agg.per_seed_ratios))?;
    Ok(agg)
}

fn estimate_ratios() -> Outcome {
    let mut shown = Vec::new();
    for (name, full) in [("martingale", false), ("martingale", true), ("drift", false), ("drift", true)] {
        let reps = SEEDS.iter().map(|&s| estimate_for(name, s, full)).collect::<Result<Vec<_>, _>>()?;
        let label = format!("{name} {}", reps[0].inequality);
        let agg = stable(&label, &reps)?;
        if name == "drift" && full {
            for r in &agg.per_seed_ratios {
                ensure((r - 1.0).abs() <= DRIFT_RATIO_DEV, || format!("{label}: ratio {r} not within {DRIFT_RATIO_DEV} of 1"))?;
            }
        }
        shown.push(format!("{label} {:.4}", agg.empirical_ratio));
    }
    let runs = ex310_runs().as_ref().map_err(|e| e.clone())?;
    let reps = runs
        .iter()
        .map(|r| {
            let spec = AprioriBoundSpec::from_generator(&r.sc.gen, &r.sc.bundle, &r.sc.params).map_err(err)?;
            apriori_zbound(&r.sol, &spec, &r.sc.bundle, &r.sc.params, 0).map_err(err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let agg = stable("ex3.10", &reps)?;
    shown.push(format!("ex3.10 {} {:.4}", agg.inequality, agg.empirical_ratio));
    // reproducible: the same seed gives the same ratio
    let again = estimate_for("martingale", SEEDS[0], false)?;
    let first = estimate_for("martingale", SEEDS[0], false)?;
    ensure(again == first, || "martingale z_bound differs on the same seed".into())?;
    Ok(shown.join(", "))
}

// 7. Assumption checkers

fn assumption_checkers() -> Outcome {
    let mut n_checks = 0;
    for name in gallery_names() {
        let pr = params_for(name);
        let sc = Scenario::from_preset(name, PATHS, STEPS, 31, &pr).map_err(err)?;
        for r in check_declared(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &pr, 4_000, 7).map_err(err)? {
            ensure(r.verdict == Verdict::Pass, || format!("{name} {}: {:?} ({})", r.assumption, r.verdict, r.note))?;
            n_checks += 1;
        }
    }
    let pr = WeightParams::default();
    let mut failed = Vec::new();
    for (gen, a) in counterexamples() {
        let sc = Scenario::unit_horizon(gen.clone(), PATHS, STEPS, 3, &pr).map_err(err)?;
        let run = || check_one(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &pr, a, 4_000, 9).map_err(err);
        let (r1, r2) = (run()?, run()?);
        ensure(r1.verdict == Verdict::Fail, || format!("{} {a}: {:?}", gen.name, r1.verdict))?;
        ensure(r1 == r2, || format!("{} {a}: report differs between runs", gen.name))?;
        let w = r1.witness.as_ref().ok_or(format!("{}: no witness", gen.name))?;
        let again = reevaluate_witness(&r1, &sc.gen, &sc.bundle, &pr).ok_or(format!("{}: witness not re-evaluable", gen.name))?;
        ensure((again - w.violation).abs() <= 1e-12 * (1.0 + w.violation.abs()), || format!("{}: witness {again} vs {}", gen.name, w.violation))?;
        failed.push(format!("{} fails {a}", gen.name));
    }
    Ok(format!("{} presets, {n_checks} declared checks pass; {}", gallery_names().len(), failed.join(", ")))
}

// 8. Determinism across thread counts

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let body = format!(
        r#"{{"name": "det", "generator": {{"preset": "ex4.6"}}, "grid": {{"n_steps": {STEPS}}}, "n_paths": {PATHS}, "seed": 4,
            "checks": {{"estimates": ["z_bound"]}}}}"#
    );
    let cfg = ExperimentConfig::from_json(&body).map_err(err)?;
    let dir = tmp.path().join("run");
    let out = in_pool(Some(REPLAY_THREADS[0]), || run_into(&cfg, &dir)).map_err(err)?.map_err(err)?;
    ensure(out.status == RunStatus::Ok, || format!("run status {:?}: {:?}", out.status, out.failures))?;
    let rep = in_pool(Some(REPLAY_THREADS[1]), || replay::replay(&dir)).map_err(err)?.map_err(err)?;
    ensure(rep.ok(), || format!("mismatches: {:?}", rep.mismatches))?;
    ensure(rep.compared.iter().any(|f| f == "paths.bin") && rep.compared.iter().any(|f| f == "solution.bin"), || format!("compared {:?}", rep.compared))?;
    Ok(format!("threads {REPLAY_THREADS:?}: {} artifacts identical (paths bit-identical)", rep.compared.len()))
}

// 9. Truncation operator

fn truncation_operator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let len = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for case in 0..TRUNC_CASES {
        let dim = rng.random_range(1..=4);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        let qx = truncate(&x, r);
        let qy = truncate(&y, r);
        let e1 = (len(&qx) - len(&x).min(r)).abs() / r.max(1.0);
        let qqx = truncate(&qx, r);
        let e2 = qqx.iter().zip(&qx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / r.max(1.0);
        let diff = |a: &[f64], b: &[f64]| len(&a.iter().zip(b).map(|(u, v)| u - v).collect::<Vec<_>>());
        let e3 = (diff(&qx, &qy) - diff(&x, &y)).max(0.0) / diff(&x, &y).max(1.0);
        worst = worst.max(e1).max(e2).max(e3);
        ensure(e1 <= TRUNC_TOL && e2 <= TRUNC_TOL && e3 <= TRUNC_TOL, || format!("case {case}: x {x:?} r {r}: errors {e1:e} {e2:e} {e3:e}"))?;
    }
    Ok(format!("{TRUNC_CASES} cases, worst scaled error {worst:.1e}"))
}

fn main() -> ExitCode {
    // cargo passes harness flags; a bare word filters criteria by name
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("closed_forms", closed_forms),
        ("norm_oracle", norm_oracle),
        ("truncation_cauchy", truncation_cauchy),
        ("subdivision_contraction", subdivision_contraction),
        ("comparison_controls", comparison_controls),
        ("estimate_ratios", estimate_ratios),
        ("assumption_checkers", assumption_checkers),
        ("determinism", determinism),
        ("truncation_operator", truncation_operator),
    ];
    // panics become FAIL lines carrying the message
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {} {name}: PASS ({secs:.1}s) {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {d}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
