//! Probe-based checkers for the structural hypotheses on a driver.
//!
//! A checker can only report that no violation was found among its probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::WeightParams;
use super::spec::{Assumption, GeneratorSpec, Process, SublinearForm};
use crate::error::{config, Result};
use crate::par;
use crate::timepaths::{norm, PathBundle, WeightTrack};

/// Absolute slack on every pointwise inequality.
pub const TOL_ABS: f64 = 1e-8;
/// Relative rounding guard, in units of machine epsilon times the magnitude
/// of the terms being compared.
pub const ROUNDING_ULPS: f64 = 64.0;
/// Clip for heavy-tailed probe coordinates.
pub const PROBE_CLIP: f64 = 1e3;
/// Fraction of saturated paths above which integrability is inconclusive.
pub const SATURATION_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// No violation found (not a proof).
    Pass,
    Fail,
    Inconclusive,
}

/// One probe point: a path, a node and two `(y, z)` arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub path: usize,
    pub node: usize,
    pub t: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

/// Reproducible record of the worst violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(flatten)]
    pub probe: Probe,
    /// `lhs - rhs` of the violated inequality.
    pub violation: f64,
    /// `pointwise` or the name of a pathwise side condition.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub assumption: String,
    pub verdict: Verdict,
    pub n_probes: usize,
    /// Probes whose margin was not finite (overflow in the driver).
    pub n_skipped: usize,
    /// Largest `lhs - rhs` seen over finite probes.
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Estimate>,
    pub note: String,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_used: usize,
    pub n_saturated: usize,
}

/// `lhs - rhs` of one inequality plus the magnitude of the terms involved.
#[derive(Debug, Clone, Copy)]
pub struct Margin {
    pub value: f64,
    pub scale: f64,
}

impl Margin {
    pub fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        Self { value: lhs - rhs, scale }
    }

    pub fn threshold(&self) -> f64 {
        TOL_ABS + ROUNDING_ULPS * f64::EPSILON * self.scale
    }

    pub fn violates(&self) -> bool {
        self.value.is_finite() && self.value > self.threshold()
    }
}

/// Which arguments the deterministic corner probes pair up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeShape {
    PairY,
    PairZ,
    Single,
}

fn corners(len: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; len]];
    for j in 0..len {
        for c in [1.0, -1.0, 10.0, -10.0] {
            let mut v = vec![0.0; len];
            v[j] = c;
            out.push(v);
        }
    }
    out
}

fn corner_probes(shape: ProbeShape, k: usize, kd: usize) -> Vec<[Vec<f64>; 4]> {
    let cy = corners(k);
    let cz = corners(kd);
    let mut out = Vec::new();
    match shape {
        ProbeShape::PairY => {
            for (i, a) in cy.iter().enumerate() {
                for (j, b) in cy.iter().enumerate() {
                    if i != j {
                        let z = cz[(i * cy.len() + j) % cz.len()].clone();
                        out.push([a.clone(), b.clone(), z.clone(), z]);
                    }
                }
            }
        }
        ProbeShape::PairZ => {
            for (i, a) in cz.iter().enumerate() {
                for (j, b) in cz.iter().enumerate() {
                    if i != j {
                        let y = cy[(i * cz.len() + j) % cy.len()].clone();
                        out.push([y.clone(), y, a.clone(), b.clone()]);
                    }
                }
            }
        }
        ProbeShape::Single => {
            for a in &cy {
                for c in &cz {
                    out.push([a.clone(), vec![0.0; k], c.clone(), vec![0.0; kd]]);
                }
            }
        }
    }
    out
}

fn heavy(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        StandardNormal.sample(rng)
    } else {
        let c: f64 = Cauchy::new(0.0, 3.0).expect("valid scale").sample(rng);
        c.clamp(-PROBE_CLIP, PROBE_CLIP)
    }
}

/// Probe `j` of the stream keyed by `seed`; corner probes come first.
pub fn make_probe(bundle: &PathBundle, shape: ProbeShape, k: usize, kd: usize, seed: u64, j: usize, corner: &[[Vec<f64>; 4]]) -> Probe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    let path = rng.random_range(0..bundle.n_paths);
    let node = rng.random_range(0..=bundle.tau[path]);
    let t = bundle.grid.nodes[node];
    if let Some(c) = corner.get(j) {
        let [y1, y2, z1, z2] = c.clone();
        return Probe { path, node, t, y1, y2, z1, z2 };
    }
    let mut draw = |n: usize| (0..n).map(|_| heavy(&mut rng)).collect::<Vec<_>>();
    let y1 = draw(k);
    let y2 = draw(k);
    let z1 = draw(kd);
    let z2 = draw(kd);
    match shape {
        ProbeShape::Single => Probe { path, node, t, y1, y2: vec![0.0; k], z1, z2: vec![0.0; kd] },
        _ => Probe { path, node, t, y1, y2, z1, z2 },
    }
}

/// Evaluates `margin` on corner probes plus `n_random` random ones.
///
/// The witness is the violating probe with the largest margin; ties go to
/// the lowest probe index.
pub fn run_probes<F>(name: &str, bundle: &PathBundle, shape: ProbeShape, k: usize, kd: usize, n_random: usize, seed: u64, margin: F) -> Result<CheckReport>
where
    F: Fn(&Probe) -> Margin + Sync + Send,
{
    if n_random < 1 {
        return Err(config("probes must be at least 1"));
    }
    let corner = corner_probes(shape, k, kd);
    let total = corner.len() + n_random;
    let results = par::map_indexed(total, |j| {
        let pr = make_probe(bundle, shape, k, kd, seed, j, &corner);
        let m = margin(&pr);
        (m, pr)
    });
    let mut worst = f64::NEG_INFINITY;
    let mut skipped = 0;
    let mut witness: Option<(f64, usize)> = None;
    for (j, (m, _)) in results.iter().enumerate() {
        if !m.value.is_finite() {
            skipped += 1;
            continue;
        }
        worst = worst.max(m.value);
        if m.violates() && witness.is_none_or(|(v, _)| m.value > v) {
            witness = Some((m.value, j));
        }
    }
    let verdict = if witness.is_some() { Verdict::Fail } else { Verdict::Pass };
    let note = match verdict {
        Verdict::Pass => format!("no violation found in {} probes ({} skipped as non-finite)", total, skipped),
        _ => format!("violation found in {} probes", total),
    };
    Ok(CheckReport {
        assumption: name.to_string(),
        verdict,
        n_probes: total,
        n_skipped: skipped,
        worst_margin: worst,
        witness: witness.map(|(v, j)| Witness { probe: results[j].1.clone(), violation: v, kind: "pointwise".into() }),
        estimate: None,
        note,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn abs_sum(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `⟨y₁-y₂, g(y₁,z) - g(y₂,z)⟩ <= μ |y₁-y₂|²`.
pub fn margin_monotone(gen: &GeneratorSpec, bundle: &PathBundle, pr: &Probe) -> Margin {
    let st = bundle.state(pr.path, pr.node);
    let g1 = gen.eval_vec(&st, &pr.y1, &pr.z1);
    let g2 = gen.eval_vec(&st, &pr.y2, &pr.z1);
    let dy = diff(&pr.y1, &pr.y2);
    let mu = bundle.track_value("mu", pr.path, pr.node);
    let dy2 = dot(&dy, &dy);
    let lhs = dot(&dy, &diff(&g1, &g2));
    let scale = abs_sum(&dy) * (abs_sum(&g1) + abs_sum(&g2)) + mu * dy2;
    Margin::new(lhs, mu * dy2, scale)
}

/// `|g(y,z₁) - g(y,z₂)| <= ν |z₁-z₂|`.
pub fn margin_lipschitz_z(gen: &GeneratorSpec, bundle: &PathBundle, pr: &Probe) -> Margin {
    let st = bundle.state(pr.path, pr.node);
    let g1 = gen.eval_vec(&st, &pr.y1, &pr.z1);
    let g2 = gen.eval_vec(&st, &pr.y1, &pr.z2);
    let nu = bundle.track_value("nu", pr.path, pr.node);
    let rhs = nu * norm(&diff(&pr.z1, &pr.z2));
    Margin::new(norm(&diff(&g1, &g2)), rhs, abs_sum(&g1) + abs_sum(&g2) + rhs)
}

/// Sub-linear growth in `z`, full or simplified right-hand side.
pub fn margin_sublinear(gen: &GeneratorSpec, bundle: &PathBundle, l: f64, pr: &Probe) -> Margin {
    let st = bundle.state(pr.path, pr.node);
    let g1 = gen.eval_vec(&st, &pr.y1, &pr.z1);
    let g0 = gen.eval_vec(&st, &pr.y1, &vec![0.0; pr.z1.len()]);
    let tv = |n: &str| bundle.track_value(n, pr.path, pr.node);
    let base = match gen.sublinear_form {
        SublinearForm::Full => tv("g1") + tv("g2") + norm(&pr.y1) + norm(&pr.z1),
        SublinearForm::Simplified => norm(&pr.z1),
    };
    let rhs = tv("gamma") * base.powf(l);
    Margin::new(norm(&diff(&g1, &g0)), rhs, abs_sum(&g1) + abs_sum(&g0) + rhs)
}

/// `|g(y,0) - g(0,0)| <= μ̃ φ(|y|)`.
pub fn margin_growth(gen: &GeneratorSpec, bundle: &PathBundle, pr: &Probe) -> Option<Margin> {
    let gb = gen.growth.as_ref()?;
    let st = bundle.state(pr.path, pr.node);
    let kd = gen.k * gen.d;
    let gy = gen.eval_vec(&st, &pr.y1, &vec![0.0; kd]);
    let g0 = gen.at_origin(&st);
    let rhs = (gb.mu_tilde)(&st) * (gb.phi)(norm(&pr.y1));
    Some(Margin::new(norm(&diff(&gy, &g0)), rhs, abs_sum(&gy) + abs_sum(&g0) + rhs))
}

/// Jump detector for continuity in `y`: flags `|g(y+h) - g(y)| > 1e-3 (1 + |g(y)|)`
/// for a step `h` of relative size `1e-9` along `y₂ - y₁`.
pub fn margin_continuity(gen: &GeneratorSpec, bundle: &PathBundle, pr: &Probe) -> Margin {
    let st = bundle.state(pr.path, pr.node);
    let mut dir = diff(&pr.y2, &pr.y1);
    let dn = norm(&dir);
    if dn == 0.0 {
        dir = vec![0.0; pr.y1.len()];
        dir[0] = 1.0;
    } else {
        dir.iter_mut().for_each(|v| *v /= dn);
    }
    let h = 1e-9 * (1.0 + norm(&pr.y1));
    let yh: Vec<f64> = pr.y1.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
    let g1 = gen.eval_vec(&st, &pr.y1, &pr.z1);
    let g2 = gen.eval_vec(&st, &yh, &pr.z1);
    let gmag = norm(&g1);
    // threshold in `Margin` is tiny next to the jump tolerance used here
    Margin { value: norm(&diff(&g2, &g1)) - 1e-3 * (1.0 + gmag), scale: 0.0 }
}

pub fn check_monotonicity_y(gen: &GeneratorSpec, bundle: &PathBundle, probes: usize, seed: u64) -> Result<CheckReport> {
    run_probes(Assumption::H4.label(), bundle, ProbeShape::PairY, gen.k, gen.k * gen.d, probes, seed, |p| {
        margin_monotone(gen, bundle, p)
    })
}

pub fn check_lipschitz_z(gen: &GeneratorSpec, bundle: &PathBundle, probes: usize, seed: u64) -> Result<CheckReport> {
    run_probes(Assumption::H5.label(), bundle, ProbeShape::PairZ, gen.k, gen.k * gen.d, probes, seed, |p| {
        margin_lipschitz_z(gen, bundle, p)
    })
}

pub fn check_continuity_y(gen: &GeneratorSpec, bundle: &PathBundle, probes: usize, seed: u64) -> Result<CheckReport> {
    run_probes(Assumption::H2.label(), bundle, ProbeShape::PairY, gen.k, gen.k * gen.d, probes, seed, |p| {
        margin_continuity(gen, bundle, p)
    })
}

pub fn check_growth_bound(gen: &GeneratorSpec, bundle: &PathBundle, probes: usize, seed: u64) -> Result<CheckReport> {
    if gen.growth.is_none() {
        return Ok(CheckReport {
            assumption: Assumption::H3b.label().into(),
            verdict: Verdict::Inconclusive,
            n_probes: 0,
            n_skipped: 0,
            worst_margin: f64::NEG_INFINITY,
            witness: None,
            estimate: None,
            note: "generator supplies no growth bound (mu_tilde, phi)".into(),
        });
    }
    run_probes(Assumption::H3b.label(), bundle, ProbeShape::Single, gen.k, gen.k * gen.d, probes, seed, |p| {
        margin_growth(gen, bundle, p).expect("growth bound present")
    })
}

/// Pathwise left-rule integrals of the sub-linear side conditions.
///
/// Returns `(name, per-path value)` pairs, each to be compared with `M`.
pub fn sublinear_side_integrals(gen: &GeneratorSpec, bundle: &PathBundle, params: &WeightParams, l: f64, weighted: bool) -> Vec<(&'static str, Vec<f64>)> {
    let nn = bundle.n_nodes();
    let beta = params.beta;
    let per_path = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..bundle.n_paths)
            .map(|p| {
                let mut cum_mu = 0.0;
                let mut s = 0.0;
                for i in 0..bundle.tau[p] {
                    let g = bundle.track_value("gamma", p, i);
                    let w = if weighted { ((1.0 - l) * beta * cum_mu).exp() } else { 1.0 };
                    let h = bundle.grid.dt(i);
                    s += f(w * g) * h;
                    cum_mu += bundle.track_value("mu", p, i) * h;
                }
                let _ = nn;
                s
            })
            .collect()
    };
    let mut out = Vec::new();
    if gen.sublinear_form == SublinearForm::Full {
        out.push(("gamma_side_condition", per_path(&|x| x.powf(1.0 / (1.0 - l)) + x)));
    }
    out.push(("gamma_bound_2_over_2_minus_l", per_path(&|x| x.powf(2.0 / (2.0 - l)))));
    out
}

/// Sub-linear growth in `z` with its pathwise integral side conditions.
///
/// `weighted` selects the `e^{(1-l)β∫μ}` form; the unweighted form is used
/// when only the primed hypothesis is declared.
pub fn check_sublinear_z(gen: &GeneratorSpec, bundle: &PathBundle, params: &WeightParams, probes: usize, seed: u64, weighted: bool) -> Result<CheckReport> {
    let l = gen
        .l
        .ok_or_else(|| config(format!("generator '{}' has no sub-linear exponent l", gen.name)))?;
    let label = if weighted { Assumption::H6 } else { Assumption::H6p };
    let mut rep = run_probes(label.label(), bundle, ProbeShape::Single, gen.k, gen.k * gen.d, probes, seed, |p| {
        margin_sublinear(gen, bundle, l, p)
    })?;
    if rep.verdict == Verdict::Fail {
        return Ok(rep);
    }
    for (name, vals) in sublinear_side_integrals(gen, bundle, params, l, weighted) {
        let (p, v) = vals
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let m = Margin::new(v, params.m, v.abs() + params.m);
        if !v.is_finite() || m.violates() {
            rep.verdict = Verdict::Fail;
            rep.witness = Some(Witness {
                probe: Probe { path: p, node: bundle.tau[p], t: bundle.grid.nodes[bundle.tau[p]], y1: vec![], y2: vec![], z1: vec![], z2: vec![] },
                violation: m.value,
                kind: name.to_string(),
            });
            rep.note = format!("pathwise {name} = {v} exceeds M = {} on path {p}", params.m);
            return Ok(rep);
        }
    }
    rep.note.push_str(&format!("; pathwise gamma integrals <= M = {}", params.m));
    Ok(rep)
}

/// Monte Carlo mean and standard error of `f(p)` over non-saturated paths.
pub fn mc_estimate(n_paths: usize, skip: &[bool], f: impl Fn(usize) -> f64 + Sync + Send) -> Estimate {
    let sums = par::tree_sum_vec(n_paths, 3, |p, acc| {
        if !skip[p] {
            let v = f(p);
            acc[0] += 1.0;
            acc[1] += v;
            acc[2] += v * v;
        }
    });
    let n = sums[0];
    let mean = if n > 0.0 { sums[1] / n } else { 0.0 };
    let var = if n > 1.0 { ((sums[2] / n - mean * mean) * n / (n - 1.0)).max(0.0) } else { 0.0 };
    Estimate { mean, std_error: (var / n.max(1.0)).sqrt(), n_used: n as usize, n_saturated: skip.iter().filter(|&&s| s).count() }
}

/// Integrability of `g(·,0,0)` in one of four weighted forms.
pub fn check_integrability(gen: &GeneratorSpec, bundle: &PathBundle, full: &WeightTrack, beta_mu: &WeightTrack, params: &WeightParams, variant: Assumption) -> Result<CheckReport> {
    let (w, power): (Option<&WeightTrack>, f64) = match variant {
        Assumption::H1 => (Some(full), params.p),
        Assumption::H1p => (Some(beta_mu), 1.0),
        Assumption::H1pp => (None, 1.0),
        Assumption::H1c => (None, params.p),
        other => return Err(config(format!("{other} is not an integrability hypothesis"))),
    };
    let unit = vec![false; bundle.n_paths];
    let skip = w.map_or(&unit, |w| &w.saturated);
    let est = mc_estimate(bundle.n_paths, skip, |p| {
        let mut s = 0.0;
        for i in 0..bundle.tau[p] {
            let st = bundle.state(p, i);
            let g0 = norm(&gen.at_origin(&st));
            let wt = w.map_or(1.0, |w| w.cum(p, i).exp());
            s += wt * g0 * bundle.grid.dt(i);
        }
        s.powf(power)
    });
    Ok(integrability_report(variant.label(), est, bundle.n_paths))
}

pub(crate) fn integrability_report(name: &str, est: Estimate, n_paths: usize) -> CheckReport {
    let sat_frac = est.n_saturated as f64 / n_paths as f64;
    let finite = est.mean.is_finite() && est.std_error.is_finite();
    let (verdict, note) = if sat_frac > SATURATION_LIMIT {
        (Verdict::Inconclusive, format!("{:.2}% of paths have saturated weights", 100.0 * sat_frac))
    } else if !finite {
        (Verdict::Fail, "estimate is not finite".to_string())
    } else {
        (Verdict::Pass, format!("estimate {:.6e} +- {:.2e}; {} saturated paths excluded", est.mean, est.std_error, est.n_saturated))
    };
    CheckReport {
        assumption: name.to_string(),
        verdict,
        n_probes: est.n_used,
        n_skipped: est.n_saturated,
        worst_margin: f64::NEG_INFINITY,
        witness: None,
        estimate: Some(est),
        note,
    }
}

/// Radii used for the general growth check.
pub const GROWTH_RADII: [f64; 3] = [1.0, 2.0, 4.0];

/// General growth in `y`: the `ψ_r^α` integral is finite for each radius in
/// [`GROWTH_RADII`]. `weighted` selects the `e^{β∫μ}` form.
pub fn check_general_growth(gen: &GeneratorSpec, bundle: &PathBundle, beta_mu: &WeightTrack, weighted: bool, n_sphere: usize) -> Result<CheckReport> {
    let label = if weighted { Assumption::H3 } else { Assumption::H3c };
    let alpha = bundle
        .track(Process::Alpha.name())
        .ok_or_else(|| config(format!("{label} needs an alpha track")))?;
    let unit;
    let w = if weighted {
        beta_mu
    } else {
        unit = WeightTrack::unit(bundle);
        &unit
    };
    let mut notes = Vec::new();
    let mut worst: Option<CheckReport> = None;
    for r in GROWTH_RADII {
        let psi = super::psi::psi_growth(gen, bundle, r, alpha, n_sphere, super::psi::DEFAULT_LADDER, w);
        let rep = integrability_report(label.label(), psi.estimate, psi.n_paths_used);
        notes.push(format!("r={r}: {}", rep.note));
        let rank = |v: Verdict| match v {
            Verdict::Pass => 0,
            Verdict::Inconclusive => 1,
            Verdict::Fail => 2,
        };
        if worst.as_ref().is_none_or(|w| rank(rep.verdict) > rank(w.verdict)) {
            worst = Some(rep);
        }
    }
    let mut rep = worst.expect("at least one radius");
    rep.note = notes.join("; ");
    Ok(rep)
}

/// Default probe counts.
pub const DEFAULT_PROBES: usize = 4000;

/// Runs the checker matching each declared hypothesis.
pub fn check_declared(gen: &GeneratorSpec, bundle: &PathBundle, full: &WeightTrack, beta_mu: &WeightTrack, params: &WeightParams, probes: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for (i, a) in gen.declared.iter().enumerate() {
        let s = seed.wrapping_add(i as u64 * 0x9E37_79B9);
        out.push(check_one(gen, bundle, full, beta_mu, params, *a, probes, s)?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn check_one(gen: &GeneratorSpec, bundle: &PathBundle, full: &WeightTrack, beta_mu: &WeightTrack, params: &WeightParams, a: Assumption, probes: usize, seed: u64) -> Result<CheckReport> {
    let n_sphere = super::psi::default_sphere(gen.k);
    match a {
        Assumption::H1 | Assumption::H1p | Assumption::H1pp | Assumption::H1c => {
            check_integrability(gen, bundle, full, beta_mu, params, a)
        }
        Assumption::H2 => check_continuity_y(gen, bundle, probes, seed),
        Assumption::H3 => check_general_growth(gen, bundle, beta_mu, true, n_sphere),
        Assumption::H3c => check_general_growth(gen, bundle, beta_mu, false, n_sphere),
        Assumption::H3b => check_growth_bound(gen, bundle, probes, seed),
        Assumption::H4 => check_monotonicity_y(gen, bundle, probes, seed),
        Assumption::H5 => check_lipschitz_z(gen, bundle, probes, seed),
        Assumption::H6 => check_sublinear_z(gen, bundle, params, probes, seed, true),
        Assumption::H6p => check_sublinear_z(gen, bundle, params, probes, seed, false),
    }
}

/// Recomputes the violation stored in a failed report's witness.
///
/// Returns `None` for reports without a witness or for hypotheses that have
/// no pointwise witness.
pub fn reevaluate_witness(report: &CheckReport, gen: &GeneratorSpec, bundle: &PathBundle, params: &WeightParams) -> Option<f64> {
    let w = report.witness.as_ref()?;
    let a = Assumption::parse(&report.assumption)?;
    if w.kind != "pointwise" {
        let l = gen.l?;
        let weighted = a == Assumption::H6;
        let vals = sublinear_side_integrals(gen, bundle, params, l, weighted);
        let (_, v) = vals.into_iter().find(|(n, _)| *n == w.kind)?;
        return Some(v[w.probe.path] - params.m);
    }
    let pr = &w.probe;
    Some(match a {
        Assumption::H2 => margin_continuity(gen, bundle, pr).value,
        Assumption::H3b => margin_growth(gen, bundle, pr)?.value,
        Assumption::H4 => margin_monotone(gen, bundle, pr).value,
        Assumption::H5 => margin_lipschitz_z(gen, bundle, pr).value,
        Assumption::H6 | Assumption::H6p => margin_sublinear(gen, bundle, gen.l?, pr).value,
        _ => return None,
    })
}
