use std::sync::Arc;

use bsde_lab_core::generators::{Assumption, GeneratorSpec, Process, TerminalCtx, WeightParams};
use bsde_lab_core::scenario::{Scenario, Setup};
use bsde_lab_core::solver::{build_subdivision, BasisConfig, Solver, SolverConfig};
use bsde_lab_core::timepaths::{NodeState, StoppingTimeSpec, TimeGrid};
use bsde_lab_core::LabError;

fn params() -> WeightParams {
    WeightParams::default()
}

fn solver(sc: &Scenario) -> Solver<'_> {
    Solver::new(&sc.bundle, sc.params, SolverConfig::default()).unwrap()
}

#[test]
fn martingale_recovers_brownian_motion() {
    let sc = Scenario::from_preset("martingale", 10_000, 100, 11, &params()).unwrap();
    let s = solver(&sc);
    let sol = s.solve_backward_zfree(&sc.gen, &sc.xi).unwrap();
    let se = 1.0 / (10_000f64).sqrt();
    assert!(sol.y0()[0].abs() <= 3.0 * se, "Y0 = {}", sol.y0()[0]);
    let mut dev = 0.0;
    let mut n = 0.0;
    for p in 0..sol.n_paths {
        for i in 0..sol.n_steps() {
            dev += (sol.z_at(p, i)[0] - 1.0).abs();
            n += 1.0;
        }
    }
    assert!(dev / n <= 0.05, "mean |Z - 1| = {}", dev / n);
    // Y_i tracks B_{t_i}
    let dev = (0..sol.n_paths).map(|p| (sol.y_at(p, 50)[0] - sc.bundle.b(p, 50)[0]).abs()).sum::<f64>() / sol.n_paths as f64;
    assert!(dev < 0.02, "{dev}");
}

#[test]
fn constant_driver_is_exact() {
    let sc = Scenario::from_preset("drift", 2_000, 100, 3, &params()).unwrap();
    let s = solver(&sc);
    let sol = s.solve_backward_zfree(&sc.gen, &sc.xi).unwrap();
    for p in 0..sol.n_paths {
        for i in 0..=100 {
            let t = sc.bundle.grid.nodes[i];
            assert!((sol.y_at(p, i)[0] - (1.0 - t)).abs() < 1e-12);
        }
    }
    let rep = s.residual_report(&sol, &sc.gen, &sc.xi).unwrap();
    assert!(rep.max_abs < 1e-12, "{}", rep.max_abs);
    assert_eq!(rep.terminal_mismatch, 0.0);
}

#[test]
fn linear_decay_matches_the_discrete_recursion() {
    let sc = Scenario::from_preset("decay", 500, 100, 3, &params()).unwrap();
    let s = solver(&sc);
    let sol = s.solve_backward_zfree(&sc.gen, &sc.xi).unwrap();
    // y_i = y_{i+1} / (1 + Δ)
    let oracle = 1.01f64.powi(-100);
    assert!((sol.y0()[0] - oracle).abs() < 1e-10 * oracle);
    assert!((sol.y0()[0] - (-1f64).exp()).abs() < 5e-3);
}

#[test]
fn corrupted_node_is_localised() {
    let sc = Scenario::from_preset("drift", 200, 20, 3, &params()).unwrap();
    let s = solver(&sc);
    let mut sol = s.solve_backward_zfree(&sc.gen, &sc.xi).unwrap();
    let at = 7 * sol.n_nodes + 9;
    sol.y[at] = 0.0;
    let rep = s.residual_report(&sol, &sc.gen, &sc.xi).unwrap();
    assert_eq!(rep.argmax_path, 7);
    assert!(rep.argmax_node == 9 || rep.argmax_node == 8);
    assert!(rep.per_node_mean_abs[9] > 0.0 && rep.per_node_mean_abs[8] > 0.0);
    assert_eq!(rep.per_node_mean_abs[3], rep.per_node_mean_abs[3].min(1e-12));
}

#[test]
fn terminal_values_are_bitwise_exact_under_random_tau() {
    let p = bsde_lab_core::generators::preset("martingale", &params()).unwrap();
    let setup = Setup {
        grid: TimeGrid::uniform(2.0, 50).unwrap(),
        n_paths: 1_000,
        seed: 5,
        stopping: StoppingTimeSpec::Hitting { level: 1.0, functional: "abs_b".into() },
        params: params(),
        cap_nu: false,
    };
    let sc = Scenario::build(p.gen, p.terminal, &setup).unwrap();
    let s = solver(&sc);
    let sol = s.solve_picard(&sc.gen, &sc.xi).unwrap();
    for q in 0..sol.n_paths {
        for i in sc.bundle.tau[q]..sol.n_nodes {
            assert_eq!(sol.y_at(q, i)[0].to_bits(), sc.xi[q].to_bits());
        }
        for i in sc.bundle.tau[q]..sol.n_steps() {
            assert_eq!(sol.z_at(q, i)[0], 0.0);
        }
    }
}

fn z_coupled(c: f64) -> GeneratorSpec {
    GeneratorSpec::new(
        "sinz",
        1,
        1,
        true,
        Arc::new(move |_: &NodeState, y: &[f64], z: &[f64], o: &mut [f64]| o[0] = -y[0] + c * z[0].sin()),
    )
    .with_constant(Process::Mu, 1.0)
    .with_constant(Process::Nu, c)
    .declaring(&[Assumption::H4, Assumption::H5])
}

fn setup(n_paths: usize, seed: u64) -> Setup {
    Setup {
        grid: TimeGrid::uniform(1.0, 50).unwrap(),
        n_paths,
        seed,
        stopping: StoppingTimeSpec::deterministic(1.0),
        params: params(),
        cap_nu: false,
    }
}

fn b1() -> bsde_lab_core::generators::TerminalFn {
    Arc::new(|c: &TerminalCtx, o: &mut [f64]| o[0] = c.state.b[0])
}

#[test]
fn picard_history_decreases_for_sine_coupling() {
    let sc = Scenario::build(z_coupled(0.5), b1(), &setup(4_000, 8)).unwrap();
    let s = solver(&sc);
    let sol = s.solve_picard(&sc.gen, &sc.xi).unwrap();
    let h = &sol.meta.picard_history;
    assert!(h.len() >= 3, "{h:?}");
    assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    assert!(*h.last().unwrap() <= 1e-6);
    assert_eq!(sol.meta.theta_histories.len(), 3);
}

#[test]
fn linear_z_driver_matches_girsanov() {
    // g = c z, ξ = B_1: under dQ/dP = exp(c B_1 - c²/2), Y_0 = E^Q[B_1] = c
    let c = 0.3;
    let gen = GeneratorSpec::new("cz", 1, 1, true, Arc::new(move |_: &NodeState, _: &[f64], z: &[f64], o: &mut [f64]| o[0] = c * z[0]))
        .with_constant(Process::Nu, c)
        .declaring(&[Assumption::H5]);
    let sc = Scenario::build(gen, b1(), &setup(10_000, 4)).unwrap();
    let s = solver(&sc);
    let sol = s.solve_picard(&sc.gen, &sc.xi).unwrap();
    // likelihood-ratio oracle on the same paths
    let n = sc.bundle.n_paths;
    let lr: Vec<f64> = (0..n).map(|p| (c * sc.bundle.b(p, 50)[0] - c * c / 2.0).exp()).collect();
    let oracle = (0..n).map(|p| lr[p] * sc.bundle.b(p, 50)[0]).sum::<f64>() / n as f64;
    assert!((oracle - c).abs() < 0.05, "oracle {oracle}");
    assert!((sol.y0()[0] - oracle).abs() < 0.03, "Y0 {} vs {oracle}", sol.y0()[0]);
}

#[test]
fn subdivision_is_plain_for_n_one_and_zfree() {
    let sc = Scenario::build(z_coupled(0.5), b1(), &setup(1_000, 2)).unwrap();
    let s = solver(&sc);
    let plain = s.solve_picard(&sc.gen, &sc.xi).unwrap();
    let plan = build_subdivision(&sc.bundle, &sc.params, 1, 2.0).unwrap();
    let sub = s.solve_subdivided(&sc.gen, &sc.xi, &plan).unwrap();
    assert_eq!(plain.y, sub.y);
    assert_eq!(plain.z, sub.z);

    let d = Scenario::from_preset("decay", 1_000, 40, 2, &params()).unwrap();
    let mut bundle = d.bundle.clone();
    bundle.tracks.insert("nu".into(), vec![1.0; bundle.n_paths * bundle.n_nodes()]);
    let s = Solver::new(&bundle, params(), SolverConfig::default()).unwrap();
    let zfree = s.solve_backward_zfree(&d.gen, &d.xi).unwrap();
    let unit_m = WeightParams { m: 1.0, ..params() };
    let plan = build_subdivision(&bundle, &unit_m, 4, 2.0).unwrap();
    assert_eq!(&plan.tau_js[..5], &[0, 10, 20, 30, 40]);
    let sub = s.solve_subdivided(&d.gen, &d.xi, &plan).unwrap();
    for (a, b) in zfree.y.iter().zip(&sub.y) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
    }
}

#[test]
fn strong_coupling_diverges_or_errors_cleanly() {
    let gen = GeneratorSpec::new("zz", 1, 1, true, Arc::new(|_: &NodeState, _: &[f64], z: &[f64], o: &mut [f64]| o[0] = 40.0 * z[0]))
        .declaring(&[Assumption::H5]);
    let sc = Scenario::build(gen, b1(), &setup(500, 1)).unwrap();
    let s = solver(&sc);
    match s.solve_picard(&sc.gen, &sc.xi) {
        Err(LabError::Divergence { history }) => assert!(history.len() >= 4),
        other => panic!("expected divergence, got {:?}", other.map(|s| s.meta.picard_history)),
    }
}

#[test]
fn undeclared_z_coupling_is_refused() {
    let gen = GeneratorSpec::new("zz", 1, 1, true, Arc::new(|_: &NodeState, _: &[f64], z: &[f64], o: &mut [f64]| o[0] = z[0]));
    let sc = Scenario::build(gen, b1(), &setup(100, 1)).unwrap();
    let s = solver(&sc);
    assert!(matches!(s.solve_picard(&sc.gen, &sc.xi), Err(LabError::Precondition(_))));
    assert!(matches!(s.solve_backward_zfree(&sc.gen, &sc.xi), Err(LabError::Precondition(_))));
}

#[test]
fn truncation_schedule_rules() {
    let sc = Scenario::from_preset("drift", 200, 20, 3, &params()).unwrap();
    let s = solver(&sc);
    let (_, h) = s.solve_via_truncation(&sc.gen, &sc.xi, &[3.0]).unwrap();
    assert!(h.is_empty());
    assert!(s.solve_via_truncation(&sc.gen, &sc.xi, &[]).is_err());
    assert!(s.solve_via_truncation(&sc.gen, &sc.xi, &[2.0, 1.0]).is_err());
    // bounded data: truncation inactive once n e^{-t} exceeds g(·,0,0) = 1
    let (_, h) = s.solve_via_truncation(&sc.gen, &sc.xi, &[4.0, 8.0, 16.0]).unwrap();
    assert_eq!(h, vec![0.0, 0.0]);
}

#[test]
fn solutions_are_deterministic() {
    let sc = Scenario::build(z_coupled(0.5), b1(), &setup(700, 9)).unwrap();
    let a = solver(&sc).solve_picard(&sc.gen, &sc.xi).unwrap();
    let b = solver(&sc).solve_picard(&sc.gen, &sc.xi).unwrap();
    assert_eq!(a, b);
}

#[test]
fn finer_grid_and_basis_stay_in_the_error_band() {
    let coarse = Scenario::from_preset("martingale", 4_000, 25, 21, &params()).unwrap();
    let fine = Scenario::from_preset("martingale", 4_000, 50, 21, &params()).unwrap();
    let se = 1.0 / 4_000f64.sqrt();
    let e0 = solver(&coarse).solve_backward_zfree(&coarse.gen, &coarse.xi).unwrap().y0()[0];
    let cfg = SolverConfig { basis: BasisConfig { degree: 6, ..BasisConfig::default() }, ..SolverConfig::default() };
    let s = Solver::new(&fine.bundle, params(), cfg).unwrap();
    let e1 = s.solve_backward_zfree(&fine.gen, &fine.xi).unwrap().y0()[0];
    // E[ξ] = 0; both sit inside 3 standard errors
    assert!(e0.abs() <= 3.0 * se && e1.abs() <= 3.0 * se, "{e0} {e1}");
}
