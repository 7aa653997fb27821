//! Exponentially weighted `L^p` norms of terminal values, `Y`, `Z`, and the
//! class-(D) estimate.
//!
//! Every norm is a Monte Carlo mean of a per-path functional raised to the
//! outer power `1 ∧ 1/p`, with a delta-method standard error. Paths whose
//! weight is saturated are excluded and counted. The weight inside each
//! functional is always `exp(∫_0^s a)`, also on sub-windows.

use serde::{Deserialize, Serialize};

use crate::error::{config, data, Result};
use crate::generators::{mc_estimate, Estimate};
use crate::timepaths::{norm, stopping_indices, PathBundle, StoppingTimeSpec, WeightTrack, WeightVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub p: f64,
    pub variant: WeightVariant,
    pub std_error: f64,
    pub n_saturated: usize,
    pub n_used: usize,
    /// Set for estimates that only bound the true quantity from below.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lower_bound: bool,
    /// Family member attaining a class-(D) maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attained_by: Option<String>,
}

/// Per-path node range `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: Vec<usize>,
    pub end: Vec<usize>,
}

impl Window {
    /// `[0, τ]` on every path.
    pub fn full(bundle: &PathBundle) -> Self {
        Self { start: vec![0; bundle.n_paths], end: bundle.tau.clone() }
    }

    /// `[s ∧ τ, τ]` on every path.
    pub fn from_node(bundle: &PathBundle, s: usize) -> Self {
        Self { start: bundle.tau.iter().map(|&t| s.min(t)).collect(), end: bundle.tau.clone() }
    }

    pub fn between(start: Vec<usize>, end: Vec<usize>) -> Result<Self> {
        if start.len() != end.len() {
            return Err(config("window start and end have different lengths"));
        }
        if let Some(p) = start.iter().zip(&end).position(|(s, e)| s > e) {
            return Err(config(format!("window starts after it ends on path {p}")));
        }
        Ok(Self { start, end })
    }
}

/// Outer power `1 ∧ 1/p`.
pub fn outer_power(p: f64) -> f64 {
    (1.0 / p).min(1.0)
}

fn finish(est: Estimate, p: f64, variant: WeightVariant) -> NormResult {
    let e = outer_power(p);
    let m = est.mean.max(0.0);
    let value = m.powf(e);
    let std_error = if m > 0.0 { e * m.powf(e - 1.0) * est.std_error } else { 0.0 };
    NormResult {
        value,
        p,
        variant,
        std_error,
        n_saturated: est.n_saturated,
        n_used: est.n_used,
        lower_bound: false,
        attained_by: None,
    }
}

fn prepare<'a>(bundle: &PathBundle, weights: &WeightTrack, p: f64, window: Option<&'a Window>, owned: &'a mut Option<Window>) -> Result<&'a Window> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(config(format!("norm exponent must be positive, got {p}")));
    }
    if bundle.n_paths == 0 {
        return Err(config("norm of an empty bundle"));
    }
    if weights.n_nodes != bundle.n_nodes() || weights.saturated.len() != bundle.n_paths {
        return Err(config("weight track does not match the bundle"));
    }
    let w = match window {
        Some(w) => w,
        None => owned.insert(Window::full(bundle)),
    };
    if w.start.len() != bundle.n_paths {
        return Err(config("window does not match the bundle"));
    }
    if w.end.iter().any(|&e| e >= bundle.n_nodes()) {
        return Err(config("window ends beyond the grid"));
    }
    Ok(w)
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(config(format!("{name} has {got} values, expected {want}")));
    }
    Ok(())
}

/// `E[(e^{∫_0^τ a} |ξ|)^p]^{1∧1/p}`; `xi` is `[path][k]`.
pub fn terminal_norm(bundle: &PathBundle, xi: &[f64], k: usize, weights: &WeightTrack, p: f64) -> Result<NormResult> {
    let mut owned = None;
    prepare(bundle, weights, p, None, &mut owned)?;
    check_len("terminal value", xi.len(), bundle.n_paths * k)?;
    let nn = bundle.n_nodes();
    let est = mc_estimate(bundle.n_paths, &weights.saturated, |q| {
        let w = weights.weight[q * nn + bundle.tau[q]];
        (w * norm(&xi[q * k..(q + 1) * k])).powf(p)
    });
    Ok(finish(est, p, weights.variant))
}

/// `E[sup_{s ≤ τ} (e^{∫_0^s a} |Y_s|)^p]^{1∧1/p}`; `y` is `[path][node][k]`.
pub fn sup_norm(bundle: &PathBundle, y: &[f64], k: usize, weights: &WeightTrack, p: f64, window: Option<&Window>) -> Result<NormResult> {
    let mut owned = None;
    let w = prepare(bundle, weights, p, window, &mut owned)?;
    let nn = bundle.n_nodes();
    check_len("Y", y.len(), bundle.n_paths * nn * k)?;
    let est = mc_estimate(bundle.n_paths, &weights.saturated, |q| {
        let mut m: f64 = 0.0;
        for i in w.start[q]..=w.end[q] {
            let at = q * nn + i;
            m = m.max(weights.weight[at] * norm(&y[at * k..(at + 1) * k]));
        }
        m.powf(p)
    });
    Ok(finish(est, p, weights.variant))
}

/// `E[(∫_0^τ e^{2∫_0^s a} |Z_s|² ds)^{p/2}]^{1∧1/p}` by the left rule;
/// `z` is `[path][step][kd]`.
pub fn z_norm(bundle: &PathBundle, z: &[f64], kd: usize, weights: &WeightTrack, p: f64, window: Option<&Window>) -> Result<NormResult> {
    let mut owned = None;
    let w = prepare(bundle, weights, p, window, &mut owned)?;
    let nn = bundle.n_nodes();
    let ns = bundle.n_steps();
    check_len("Z", z.len(), bundle.n_paths * ns * kd)?;
    let est = mc_estimate(bundle.n_paths, &weights.saturated, |q| {
        let mut s = 0.0;
        for i in w.start[q]..w.end[q] {
            let at = q * ns + i;
            let v = weights.weight[q * nn + i] * norm(&z[at * kd..(at + 1) * kd]);
            s += v * v * bundle.grid.dt(i);
        }
        s.powf(p / 2.0)
    });
    Ok(finish(est, p, weights.variant))
}

/// `‖Y‖ + ‖Z‖`; the standard error is the sum of both.
pub fn h_norm(bundle: &PathBundle, y: &[f64], z: &[f64], k: usize, d: usize, weights: &WeightTrack, p: f64, window: Option<&Window>) -> Result<NormResult> {
    let a = sup_norm(bundle, y, k, weights, p, window)?;
    let b = z_norm(bundle, z, k * d, weights, p, window)?;
    Ok(NormResult { value: a.value + b.value, std_error: a.std_error + b.std_error, ..a })
}

/// One stopping time of a class-(D) family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "member", rename_all = "snake_case")]
pub enum ClassDMember {
    /// The rule as given; it must not exceed `τ` on any path.
    Exact { rule: StoppingTimeSpec },
    /// The rule stopped at `τ`.
    CappedAtTau { rule: StoppingTimeSpec },
    Tau,
}

impl ClassDMember {
    pub fn label(&self) -> String {
        match self {
            Self::Exact { rule } => format!("{rule:?}"),
            Self::CappedAtTau { rule } => format!("{rule:?} ∧ τ"),
            Self::Tau => "τ".into(),
        }
    }

    fn indices(&self, bundle: &PathBundle) -> Result<Vec<usize>> {
        match self {
            Self::Tau => Ok(bundle.tau.clone()),
            Self::CappedAtTau { rule } => {
                let mut ix = stopping_indices(bundle, rule)?;
                ix.iter_mut().zip(&bundle.tau).for_each(|(i, t)| *i = (*i).min(*t));
                Ok(ix)
            }
            Self::Exact { rule } => {
                let ix = stopping_indices(bundle, rule)?;
                if let Some(p) = ix.iter().zip(&bundle.tau).position(|(i, t)| i > t) {
                    return Err(data(format!(
                        "stopping time {} exceeds τ on path {p} (node {} > {})",
                        self.label(),
                        ix[p],
                        bundle.tau[p]
                    )));
                }
                Ok(ix)
            }
        }
    }
}

/// Deterministic times at every grid node, each stopped at `τ`, plus `τ`.
pub fn default_family(bundle: &PathBundle) -> Vec<ClassDMember> {
    let mut f: Vec<ClassDMember> = bundle
        .grid
        .nodes
        .iter()
        .map(|&t| ClassDMember::CappedAtTau { rule: StoppingTimeSpec::deterministic(t) })
        .collect();
    f.push(ClassDMember::Tau);
    f
}

/// Per-member estimates of `E[e^{∫_0^σ a} |Y_σ|]`.
pub fn class_d_members(bundle: &PathBundle, y: &[f64], k: usize, weights: &WeightTrack, family: &[ClassDMember]) -> Result<Vec<NormResult>> {
    if family.is_empty() {
        return Err(config("class-(D) family is empty"));
    }
    let mut owned = None;
    prepare(bundle, weights, 1.0, None, &mut owned)?;
    let nn = bundle.n_nodes();
    if y.is_empty() {
        return Err(config("class-(D) norm of an empty process"));
    }
    check_len("Y", y.len(), bundle.n_paths * nn * k)?;
    family
        .iter()
        .map(|m| {
            let ix = m.indices(bundle)?;
            let est = mc_estimate(bundle.n_paths, &weights.saturated, |q| {
                let at = q * nn + ix[q];
                weights.weight[at] * norm(&y[at * k..(at + 1) * k])
            });
            let mut r = finish(est, 1.0, weights.variant);
            r.attained_by = Some(m.label());
            Ok(r)
        })
        .collect()
}

/// Maximum over `family`, labelled as a lower bound of the full supremum.
///
/// Ties go to the earliest member.
pub fn class_d_norm(bundle: &PathBundle, y: &[f64], k: usize, weights: &WeightTrack, family: &[ClassDMember]) -> Result<NormResult> {
    let all = class_d_members(bundle, y, k, weights, family)?;
    let mut best = 0;
    for (j, r) in all.iter().enumerate() {
        if r.value > all[best].value {
            best = j;
        }
    }
    let mut r = all.into_iter().nth(best).expect("family is non-empty");
    r.lower_bound = true;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::{simulate_brownian, TimeGrid};

    fn toy() -> PathBundle {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let mut b = simulate_brownian(&g, 3, 1, 5).unwrap();
        b.tau = vec![3, 2, 1];
        b
    }

    fn weights(b: &PathBundle, a: f64) -> WeightTrack {
        let a = vec![a; b.n_paths * b.n_nodes()];
        WeightTrack::from_exponent(b, WeightVariant::Custom, a).unwrap()
    }

    #[test]
    fn zero_processes_have_zero_norm() {
        let b = toy();
        let w = weights(&b, 0.7);
        let y = vec![0.0; 12];
        for p in [0.5, 1.0, 2.0] {
            assert_eq!(sup_norm(&b, &y, 1, &w, p, None).unwrap().value, 0.0);
            assert_eq!(z_norm(&b, &y[..9], 1, &w, p, None).unwrap().value, 0.0);
            assert_eq!(terminal_norm(&b, &[0.0; 3], 1, &w, p).unwrap().value, 0.0);
        }
    }

    #[test]
    fn sup_of_identity_path() {
        let b = toy();
        let w = WeightTrack::unit(&b);
        let mut b1 = b.clone();
        b1.tau = vec![3; 3];
        let y: Vec<f64> = (0..3).flat_map(|_| b.grid.nodes.clone()).collect();
        let r = sup_norm(&b1, &y, 1, &w, 1.0, None).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        let z = vec![1.0; 9];
        let r = z_norm(&b1, &z, 1, &w, 2.0, None).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_two_path_terminal() {
        let b = {
            let mut b = toy();
            b.tau = vec![3, 1, 2];
            b
        };
        let w = weights(&b, 1.0);
        // weights e^{t_τ}: e^1, e^{1/3}, e^{2/3}
        let xi = [1.0, -2.0, 0.5];
        let r = terminal_norm(&b, &xi, 1, &w, 2.0).unwrap();
        let want = ((1f64.exp().powi(2) + 4.0 * (2.0f64 / 3.0).exp() + 0.25 * (4.0f64 / 3.0).exp()) / 3.0).sqrt();
        assert!((r.value - want).abs() < 1e-12 * want);
    }

    #[test]
    fn windows_restrict_ranges() {
        let b = toy();
        let w = WeightTrack::unit(&b);
        let y: Vec<f64> = (0..12).map(|j| j as f64).collect();
        let win = Window::from_node(&b, 2);
        // path 0 nodes 2..=3 → 3; path 1 node 2 → 6; path 2 node 1 → 9
        let r = sup_norm(&b, &y, 1, &w, 1.0, Some(&win)).unwrap();
        assert!((r.value - (3.0 + 6.0 + 9.0) / 3.0).abs() < 1e-14);
        assert!(Window::between(vec![2], vec![1]).is_err());
    }

    #[test]
    fn class_d_constant_and_errors() {
        let b = toy();
        let w = WeightTrack::unit(&b);
        let y = vec![2.5; 12];
        let r = class_d_norm(&b, &y, 1, &w, &default_family(&b)).unwrap();
        assert!((r.value - 2.5).abs() < 1e-15);
        assert!(r.lower_bound);
        let exact = [ClassDMember::Exact { rule: StoppingTimeSpec::deterministic(1.0) }];
        assert!(matches!(class_d_norm(&b, &y, 1, &w, &exact), Err(crate::LabError::Data(_))));
        assert!(class_d_norm(&b, &y, 1, &w, &[]).is_err());
        assert!(class_d_norm(&b, &[], 1, &w, &default_family(&b)).is_err());
    }

    #[test]
    fn saturated_paths_excluded() {
        let b = toy();
        let mut a = vec![0.0; 12];
        a[0] = 3000.0;
        let w = WeightTrack::from_exponent(&b, WeightVariant::Custom, a).unwrap();
        let r = sup_norm(&b, &[1.0; 12], 1, &w, 2.0, None).unwrap();
        assert_eq!(r.n_saturated, 1);
        assert_eq!(r.n_used, 2);
        assert!(r.value.is_finite());
    }
}
