use serde::{Deserialize, Serialize};

use super::bundle::PathBundle;
use crate::error::{config, Result};
use crate::par;

/// Rule producing the terminal time `τ` on each path.
///
/// All rules fire at the first grid node where their condition holds, so the
/// decision at node `i` uses nodes `0..=i` only. Rules that never fire are
/// censored at the grid cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingTimeSpec {
    Deterministic { t: f64 },
    /// First node where `functional >= level`.
    Hitting { level: f64, functional: String },
    /// First node where the left-rule running integral of `integrand`
    /// reaches `threshold`. `integrand` is a process name, optionally
    /// suffixed with `^2`.
    CappedIntegral { threshold: f64, integrand: String },
    Infinite,
}

impl StoppingTimeSpec {
    pub fn deterministic(t: f64) -> Self {
        Self::Deterministic { t }
    }
}

/// Per-path scalar signal plus the comparison that makes a rule fire.
enum Rule<'a> {
    Fixed(usize, bool),
    Never,
    Level(Box<dyn Fn(usize, usize) -> f64 + Sync + 'a>, f64),
    Integral(Box<dyn Fn(usize, usize) -> f64 + Sync + 'a>, f64),
}

fn parse_integrand<'a>(bundle: &'a PathBundle, name: &str) -> Result<Box<dyn Fn(usize, usize) -> f64 + Sync + 'a>> {
    let (base, squared) = match name.strip_suffix("^2") {
        Some(b) => (b, true),
        None => (name, false),
    };
    if !bundle.tracks.contains_key(base) && bundle.aux_index(base).is_none() {
        return Err(config(format!("integrand process '{base}' has no filled track")));
    }
    let f = bundle.functional(base)?;
    Ok(if squared { Box::new(move |p, i| f(p, i).powi(2)) } else { f })
}

fn compile<'a>(bundle: &'a PathBundle, spec: &StoppingTimeSpec) -> Result<Rule<'a>> {
    let g = &bundle.grid;
    Ok(match spec {
        StoppingTimeSpec::Deterministic { t } => {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(config(format!("deterministic stopping time must be finite and >= 0, got {t}")));
            }
            let censored = *t > g.t_max * (1.0 + 1e-12);
            Rule::Fixed(g.index_not_exceeding(*t), censored)
        }
        StoppingTimeSpec::Infinite => Rule::Never,
        StoppingTimeSpec::Hitting { level, functional } => Rule::Level(bundle.functional(functional)?, *level),
        StoppingTimeSpec::CappedIntegral { threshold, integrand } => {
            Rule::Integral(parse_integrand(bundle, integrand)?, *threshold)
        }
    })
}

/// Applies `rule` to path `p` looking only at nodes `0..=upto`.
fn fire(rule: &Rule, bundle: &PathBundle, p: usize, upto: usize) -> (usize, bool) {
    let n = bundle.n_steps();
    match rule {
        Rule::Fixed(i, c) => (*i, *c),
        Rule::Never => (n, true),
        Rule::Level(f, level) => match (0..=upto).find(|&i| f(p, i) >= *level) {
            Some(i) => (i, false),
            None => (n, true),
        },
        Rule::Integral(f, thr) => {
            let mut cum = 0.0;
            for i in 0..=upto {
                if cum >= *thr {
                    return (i, false);
                }
                if i < n {
                    cum += f(p, i) * bundle.grid.dt(i);
                }
            }
            (n, true)
        }
    }
}

/// Realizes `spec` on every path and masks coefficient tracks beyond `τ`.
pub fn realize_stopping_time(bundle: &mut PathBundle, spec: &StoppingTimeSpec) -> Result<()> {
    let n = bundle.n_steps();
    let out = {
        let rule = compile(bundle, spec)?;
        let b = &*bundle;
        par::map_indexed(b.n_paths, |p| fire(&rule, b, p, n))
    };
    for (p, (t, c)) in out.into_iter().enumerate() {
        bundle.tau[p] = t;
        bundle.censored[p] = c;
    }
    bundle.mask_beyond_tau();
    Ok(())
}

/// Stopping index of `spec` on every path, using the whole grid.
pub fn stopping_indices(bundle: &PathBundle, spec: &StoppingTimeSpec) -> Result<Vec<usize>> {
    let rule = compile(bundle, spec)?;
    let n = bundle.n_steps();
    Ok(par::map_indexed(bundle.n_paths, |p| fire(&rule, bundle, p, n).0))
}

/// Stopping index of path `p` recomputed from the prefix `0..=upto` only.
///
/// Used to check adaptedness: for `upto >= τ_p` this equals the realized `τ_p`.
pub fn stopping_index_from_prefix(bundle: &PathBundle, spec: &StoppingTimeSpec, p: usize, upto: usize) -> Result<usize> {
    let rule = compile(bundle, spec)?;
    Ok(fire(&rule, bundle, p, upto.min(bundle.n_steps())).0)
}

/// Replaces `τ` by `τ ∧ σ` with `σ` the first node where the left-rule running
/// integral of `integrand` reaches `threshold`. Returns the number of paths
/// whose `τ` moved.
pub fn cap_tau_by_integral(bundle: &mut PathBundle, threshold: f64, integrand: &str) -> Result<usize> {
    let n = bundle.n_steps();
    let caps = {
        let rule = Rule::Integral(parse_integrand(bundle, integrand)?, threshold);
        let b = &*bundle;
        par::map_indexed(b.n_paths, |p| fire(&rule, b, p, n))
    };
    let mut moved = 0;
    for (p, (s, c)) in caps.into_iter().enumerate() {
        if !c && s < bundle.tau[p] {
            bundle.tau[p] = s;
            bundle.censored[p] = false;
            moved += 1;
        }
    }
    bundle.mask_beyond_tau();
    Ok(moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::bundle::{simulate_brownian, PathFn, NodeState};
    use crate::timepaths::grid::{Spacing, TimeGrid};
    use std::sync::Arc;

    fn bundle(n_paths: usize, n: usize, seed: u64) -> PathBundle {
        let g = TimeGrid::build(1.0, n, Spacing::Uniform).unwrap();
        simulate_brownian(&g, n_paths, 1, seed).unwrap()
    }

    #[test]
    fn deterministic_full_horizon() {
        let mut b = bundle(5, 10, 1);
        realize_stopping_time(&mut b, &StoppingTimeSpec::deterministic(1.0)).unwrap();
        assert!(b.tau.iter().all(|&t| t == 10));
        assert!(b.censored.iter().all(|&c| !c));
        realize_stopping_time(&mut b, &StoppingTimeSpec::deterministic(0.55)).unwrap();
        assert!(b.tau.iter().all(|&t| t == 5));
        realize_stopping_time(&mut b, &StoppingTimeSpec::Infinite).unwrap();
        assert!(b.censored.iter().all(|&c| c));
    }

    #[test]
    fn hitting_matches_scan() {
        let mut b = bundle(200, 50, 9);
        let spec = StoppingTimeSpec::Hitting { level: 0.5, functional: "abs_b".into() };
        realize_stopping_time(&mut b, &spec).unwrap();
        for p in 0..b.n_paths {
            let scan = (0..=50).find(|&i| b.abs_b(p, i) >= 0.5);
            assert_eq!(b.tau[p], scan.unwrap_or(50));
            assert_eq!(b.censored[p], scan.is_none());
        }
    }

    #[test]
    fn hitting_at_node_seven() {
        let g = TimeGrid::build(1.0, 10, Spacing::Uniform).unwrap();
        let mut inc = vec![0.05; 10];
        inc[6] = 0.3; // |B| = .3 at node 6, .6 at node 7
        let mut b = PathBundle::from_increments(g, 1, 1, 0, inc).unwrap();
        let spec = StoppingTimeSpec::Hitting { level: 0.5, functional: "abs_b".into() };
        realize_stopping_time(&mut b, &spec).unwrap();
        assert_eq!(b.tau[0], 7);
    }

    #[test]
    fn capped_integral_matches_prefix_sum() {
        let mut b = bundle(100, 40, 3);
        let nu: PathFn = Arc::new(|s: &NodeState| 1.0 + s.abs_b);
        b.fill_track("nu", &nu).unwrap();
        let nu_copy = b.tracks["nu"].clone();
        let spec = StoppingTimeSpec::CappedIntegral { threshold: 1.5, integrand: "nu^2".into() };
        realize_stopping_time(&mut b, &spec).unwrap();
        let dt = 1.0 / 40.0;
        for p in 0..100 {
            let mut prefix = vec![0.0];
            for i in 0..40 {
                prefix.push(prefix[i] + nu_copy[p * 41 + i].powi(2) * dt);
            }
            let expect = prefix.iter().position(|&c| c >= 1.5).unwrap_or(40);
            assert_eq!(b.tau[p], expect, "path {p}");
        }
    }

    #[test]
    fn missing_integrand_is_config_error() {
        let mut b = bundle(3, 4, 3);
        let spec = StoppingTimeSpec::CappedIntegral { threshold: 1.0, integrand: "nu^2".into() };
        assert!(matches!(realize_stopping_time(&mut b, &spec), Err(crate::LabError::Config(_))));
    }

    #[test]
    fn prefix_recomputation_is_adapted() {
        let mut b = bundle(300, 30, 5);
        let spec = StoppingTimeSpec::Hitting { level: 0.7, functional: "sup_abs_b".into() };
        realize_stopping_time(&mut b, &spec).unwrap();
        for p in 0..b.n_paths {
            let t = b.tau[p];
            assert_eq!(stopping_index_from_prefix(&b, &spec, p, t).unwrap(), t);
        }
    }
}
