use bsde_lab_core::generators::{check_declared, check_one, counterexamples, gallery_names, preset, reevaluate_witness, Verdict, WeightParams};
use bsde_lab_core::scenario::Scenario;

const EXAMPLES: [&str; 6] = ["ex3.9", "ex3.10", "ex3.11", "ex4.6", "ex4.7", "ex4.8"];

fn params_for(name: &str) -> WeightParams {
    let base = WeightParams::default();
    let m = preset(name, &base).unwrap().suggested_m.unwrap_or(base.m);
    WeightParams { m, ..base }
}

#[test]
fn declared_hypotheses_hold_on_every_preset() {
    for name in gallery_names() {
        let pr = params_for(name);
        let sc = Scenario::from_preset(name, 2_000, 50, 11, &pr).unwrap();
        let reps = check_declared(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &pr, 1_000, 5).unwrap();
        assert_eq!(reps.len(), sc.gen.declared.len());
        for r in reps {
            assert_eq!(r.verdict, Verdict::Pass, "{name} {}: {}", r.assumption, r.note);
        }
    }
    assert!(EXAMPLES.iter().all(|e| gallery_names().contains(e)));
}

#[test]
fn counterexamples_fail_with_reproducible_witnesses() {
    let pr = WeightParams::default();
    for (gen, a) in counterexamples() {
        let sc = Scenario::unit_horizon(gen.clone(), 500, 50, 3, &pr).unwrap();
        let r1 = check_one(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &pr, a, 1_000, 9).unwrap();
        let r2 = check_one(&sc.gen, &sc.bundle, &sc.full, &sc.beta_mu, &pr, a, 1_000, 9).unwrap();
        assert_eq!(r1.verdict, Verdict::Fail, "{} {a}", gen.name);
        assert_eq!(r1, r2);
        let w = r1.witness.as_ref().unwrap();
        assert!(w.violation > 0.0);
        let again = reevaluate_witness(&r1, &sc.gen, &sc.bundle, &pr).unwrap();
        assert!((again - w.violation).abs() <= 1e-12 * (1.0 + w.violation.abs()), "{} {again} vs {}", gen.name, w.violation);
    }
}

#[test]
fn preset_scenarios_are_seed_deterministic() {
    for name in EXAMPLES {
        let pr = params_for(name);
        let a = Scenario::from_preset(name, 200, 20, 4, &pr).unwrap();
        let b = Scenario::from_preset(name, 200, 20, 4, &pr).unwrap();
        assert_eq!(a.bundle.tau, b.bundle.tau);
        assert_eq!(a.xi.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.xi.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let c = Scenario::from_preset(name, 200, 20, 5, &pr).unwrap();
        assert_ne!(a.xi, c.xi);
    }
}
