//! Empirical a priori bound ratios and comparison checks on solver output.

use serde::{Deserialize, Serialize};

use crate::error::{config, LabError, Result};
use crate::generators::{mc_estimate, run_probes, CheckReport, Estimate, GeneratorSpec, Margin, Probe, ProbeShape, Process, WeightParams};
use crate::solver::{DiscreteSolution, ResidualReport};
use crate::timepaths::{norm, PathBundle, PathFn, WeightTrack, WeightVariant};
use crate::wnorms::sup_norm;

/// Across-seed spread `(max - min) / |mean|` above which a ratio is unstable.
pub const MAX_SPREAD: f64 = 0.5;

/// Data `u, v, f` with `⟨ŷ, g(t,y,z)⟩ ≤ u|y| + v|z| + f`, tabulated on
/// `[path][node]`, and the exponent `ā = βu + ρ/(2[(p-1)∧1]) v² 1_{p>1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AprioriBoundSpec {
    pub p: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub abar: WeightTrack,
}

impl AprioriBoundSpec {
    pub fn from_fns(bundle: &PathBundle, params: &WeightParams, u: &PathFn, v: &PathFn, f: &PathFn) -> Result<Self> {
        let nn = bundle.n_nodes();
        let tab = |h: &PathFn| -> Vec<f64> {
            let mut out = vec![0.0; bundle.n_paths * nn];
            crate::par::for_each_chunk_mut(&mut out, nn, |p, row| {
                for (i, o) in row.iter_mut().enumerate().take(bundle.tau[p] + 1) {
                    *o = h(&bundle.state(p, i));
                }
            });
            out
        };
        Self::from_tracks(bundle, params, tab(u), tab(v), tab(f))
    }

    pub fn from_tracks(bundle: &PathBundle, params: &WeightParams, u: Vec<f64>, v: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        params.validate()?;
        let len = bundle.n_paths * bundle.n_nodes();
        if u.len() != len || v.len() != len || f.len() != len {
            return Err(config("a priori tracks do not match the bundle"));
        }
        let nn = bundle.n_nodes();
        for (name, t) in [("u", &u), ("v", &v), ("f", &f)] {
            if let Some(j) = t.iter().enumerate().position(|(j, x)| j % nn <= bundle.tau[j / nn] && !(x.is_finite() && *x >= 0.0)) {
                return Err(LabError::Data(format!("a priori track {name} is {} on path {} at node {}", t[j], j / nn, j % nn)));
            }
        }
        let c = params.nu_coefficient();
        let a: Vec<f64> = u.iter().zip(&v).map(|(u, v)| params.beta * u + c * v * v).collect();
        let abar = WeightTrack::from_exponent(bundle, WeightVariant::Custom, a)?;
        Ok(Self { p: params.p, u, v, f, abar })
    }

    /// `u = μ`, `v = ν`, `f = |g(t,0,0)|` from the generator's coefficient
    /// tracks (missing tracks read as zero).
    pub fn from_generator(gen: &GeneratorSpec, bundle: &PathBundle, params: &WeightParams) -> Result<Self> {
        let nn = bundle.n_nodes();
        let track = |p: Process| -> Vec<f64> { (0..bundle.n_paths * nn).map(|j| bundle.track_value(p.name(), j / nn, j % nn)).collect() };
        let f = crate::par::map_indexed(bundle.n_paths * nn, |j| {
            let (p, i) = (j / nn, j % nn);
            if i > bundle.tau[p] {
                0.0
            } else {
                norm(&gen.at_origin(&bundle.state(p, i)))
            }
        });
        Self::from_tracks(bundle, params, track(Process::Mu), track(Process::Nu), f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateVerdict {
    Bounded,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// `z_bound` (`p > 1`), `z_bound_small_p` (`p ≤ 1`) or `full_bound`.
    pub inequality: String,
    pub start_node: usize,
    pub p: f64,
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub rhs_without_constant: f64,
    pub rhs_std_error: f64,
    pub empirical_ratio: f64,
    /// Set when both sides vanish and the ratio is reported as 0.
    pub zero_over_zero: bool,
    pub seeds: Vec<u64>,
    pub per_seed_ratios: Vec<f64>,
    pub verdict: EstimateVerdict,
    pub n_saturated: usize,
}

fn ratio(lhs: f64, rhs: f64) -> (f64, bool) {
    if lhs == 0.0 && rhs == 0.0 {
        (0.0, true)
    } else {
        (lhs / rhs, false)
    }
}

struct Sides {
    lhs: Estimate,
    rhs: Estimate,
}

fn report(id: &str, t: usize, p: f64, seed: u64, s: Sides) -> EstimateReport {
    let (r, zz) = ratio(s.lhs.mean, s.rhs.mean);
    EstimateReport {
        inequality: id.into(),
        start_node: t,
        p,
        lhs: s.lhs.mean,
        lhs_std_error: s.lhs.std_error,
        rhs_without_constant: s.rhs.mean,
        rhs_std_error: s.rhs.std_error,
        empirical_ratio: r,
        zero_over_zero: zz,
        seeds: vec![seed],
        per_seed_ratios: vec![r],
        verdict: if r.is_finite() { EstimateVerdict::Bounded } else { EstimateVerdict::Unstable },
        n_saturated: s.lhs.n_saturated,
    }
}

/// Per-path pieces on `[t∧τ, τ]`.
struct Pieces<'a> {
    bundle: &'a PathBundle,
    sol: &'a DiscreteSolution,
    spec: &'a AprioriBoundSpec,
    t: usize,
}

impl Pieces<'_> {
    fn start(&self, q: usize) -> usize {
        self.t.min(self.bundle.tau[q])
    }

    fn w(&self, q: usize, i: usize) -> f64 {
        self.spec.abar.weight[q * self.bundle.n_nodes() + i]
    }

    fn sup_y(&self, q: usize, p: f64) -> f64 {
        (self.start(q)..=self.bundle.tau[q]).map(|i| (self.w(q, i) * norm(self.sol.y_at(q, i))).powf(p)).fold(0.0, f64::max)
    }

    fn z_int(&self, q: usize, p: f64) -> f64 {
        let s: f64 = (self.start(q)..self.bundle.tau[q])
            .map(|i| (self.w(q, i) * norm(self.sol.z_at(q, i))).powi(2) * self.bundle.grid.dt(i))
            .sum();
        s.powf(p / 2.0)
    }

    fn f_int(&self, q: usize, p: f64) -> f64 {
        let nn = self.bundle.n_nodes();
        let s: f64 = (self.start(q)..self.bundle.tau[q]).map(|i| self.w(q, i) * self.spec.f[q * nn + i] * self.bundle.grid.dt(i)).sum();
        s.powf(p)
    }

    fn terminal(&self, q: usize, p: f64) -> f64 {
        let t = self.bundle.tau[q];
        (self.w(q, t) * norm(self.sol.y_at(q, t))).powf(p)
    }
}

fn align(sol: &DiscreteSolution, spec: &AprioriBoundSpec, bundle: &PathBundle) -> Result<()> {
    sol.check_aligned(bundle)?;
    if spec.abar.n_nodes != bundle.n_nodes() || spec.abar.saturated.len() != bundle.n_paths {
        return Err(config("a priori spec does not match the bundle"));
    }
    Ok(())
}

/// `E[(∫ e^{2∫ā}|Z|²)^{p/2}]` against
/// `E[sup e^{p∫ā}|Y|^p] + E[(∫ e^{∫ā} f)^p]` on `[t∧τ, τ]`.
///
/// For `p ≤ 1` the bound needs `∫_0^τ v² ≤ M`, checked per path with one
/// step of overshoot allowed.
pub fn apriori_zbound(sol: &DiscreteSolution, spec: &AprioriBoundSpec, bundle: &PathBundle, params: &WeightParams, t_node: usize) -> Result<EstimateReport> {
    align(sol, spec, bundle)?;
    let p = spec.p;
    let id = if p > 1.0 {
        "z_bound"
    } else {
        let nn = bundle.n_nodes();
        for q in 0..bundle.n_paths {
            let mut cum = 0.0;
            let mut last = 0.0;
            for i in 0..bundle.tau[q] {
                last = spec.v[q * nn + i].powi(2) * bundle.grid.dt(i);
                cum += last;
            }
            if cum - last > params.m * (1.0 + 1e-12) {
                return Err(LabError::Precondition(format!("∫v² = {cum} exceeds M = {} on path {q}", params.m)));
            }
        }
        "z_bound_small_p"
    };
    let pc = Pieces { bundle, sol, spec, t: t_node };
    let skip = &spec.abar.saturated;
    let lhs = mc_estimate(bundle.n_paths, skip, |q| pc.z_int(q, p));
    let rhs = mc_estimate(bundle.n_paths, skip, |q| pc.sup_y(q, p) + pc.f_int(q, p));
    Ok(report(id, t_node, p, bundle.seed, Sides { lhs, rhs }))
}

/// `E[sup e^{p∫ā}|Y|^p] + E[(∫ e^{2∫ā}|Z|²)^{p/2}]` against
/// `E[e^{p∫ā}|ξ|^p] + E[(∫ e^{∫ā} f)^p]` on `[t∧τ, τ]`, for `p > 1`.
pub fn apriori_full(sol: &DiscreteSolution, spec: &AprioriBoundSpec, bundle: &PathBundle, t_node: usize) -> Result<EstimateReport> {
    align(sol, spec, bundle)?;
    let p = spec.p;
    if p <= 1.0 {
        return Err(config(format!("the full a priori bound needs p > 1, got {p}")));
    }
    let pc = Pieces { bundle, sol, spec, t: t_node };
    let skip = &spec.abar.saturated;
    let lhs = mc_estimate(bundle.n_paths, skip, |q| pc.sup_y(q, p) + pc.z_int(q, p));
    let rhs = mc_estimate(bundle.n_paths, skip, |q| pc.terminal(q, p) + pc.f_int(q, p));
    Ok(report("full_bound", t_node, p, bundle.seed, Sides { lhs, rhs }))
}

/// Merges single-seed reports of the same inequality. The ratio is the mean
/// of the per-seed ratios; the verdict is `unstable` when their spread
/// exceeds [`MAX_SPREAD`] or any ratio is not finite.
pub fn aggregate_seeds(reports: &[EstimateReport]) -> Result<EstimateReport> {
    let first = reports.first().ok_or_else(|| config("no reports to aggregate"))?;
    if reports.iter().any(|r| r.inequality != first.inequality || r.start_node != first.start_node) {
        return Err(config("reports differ in inequality or start node"));
    }
    let n = reports.len() as f64;
    let ratios: Vec<f64> = reports.iter().flat_map(|r| r.per_seed_ratios.clone()).collect();
    let mean = |f: &dyn Fn(&EstimateReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mr = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
    let spread = if mr != 0.0 { (hi - lo) / mr.abs() } else { 0.0 };
    let stable = ratios.iter().all(|r| r.is_finite()) && spread <= MAX_SPREAD;
    Ok(EstimateReport {
        lhs: mean(&|r| r.lhs),
        lhs_std_error: (reports.iter().map(|r| r.lhs_std_error.powi(2)).sum::<f64>()).sqrt() / n,
        rhs_without_constant: mean(&|r| r.rhs_without_constant),
        rhs_std_error: (reports.iter().map(|r| r.rhs_std_error.powi(2)).sum::<f64>()).sqrt() / n,
        empirical_ratio: mr,
        zero_over_zero: reports.iter().all(|r| r.zero_over_zero),
        seeds: reports.iter().flat_map(|r| r.seeds.clone()).collect(),
        per_seed_ratios: ratios,
        verdict: if stable { EstimateVerdict::Bounded } else { EstimateVerdict::Unstable },
        n_saturated: reports.iter().map(|r| r.n_saturated).sum(),
        ..first.clone()
    })
}

/// Which trajectory the driver ordering is checked on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonSide {
    /// `g(t, Y'_t, Z'_t) ≤ g'(t, Y'_t, Z'_t)` on the second solution.
    I,
    /// `g(t, Y_t, Z_t) ≤ g'(t, Y_t, Z_t)` on the first solution.
    Ii,
}

/// `q = PQ/(P+Q)` with `P = p`, `Q = 1 + ρ/[(p-1)∧1]`.
pub fn comparison_exponent(p: f64, rho: f64) -> f64 {
    let c = (p - 1.0).min(1.0);
    p * (c + rho) / ((p + 1.0) * c + rho)
}

/// Root-sum-square over nodes of the mean one-step residual: the size of
/// the accumulated defect when per-step defects are centred and uncorrelated.
pub fn accumulated_defect(r: &ResidualReport) -> f64 {
    r.per_node_mean_abs.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `max(1e-6, 3 ×` the larger accumulated defect`)`.
pub fn comparison_tolerance(a: &ResidualReport, b: &ResidualReport) -> f64 {
    (3.0 * accumulated_defect(a).max(accumulated_defect(b))).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: usize,
    pub node: usize,
    pub u_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonWitness {
    pub side: ComparisonSide,
    pub tol_comp: f64,
    /// Failed preconditions (only populated when not enforced).
    pub precondition_failures: Vec<String>,
    pub n_checked: usize,
    pub n_violations: usize,
    /// Up to [`MAX_LISTED`] violations, worst first.
    pub violations: Vec<Violation>,
    pub max_u_plus: f64,
    /// `‖(Y − Y')⁺‖` in the sup norm with the full weight.
    pub weighted_sup_u_plus: f64,
    pub q: f64,
    /// `max |b_s| / ν_s` over nodes with `ν_s > 0`; at most 1 by construction.
    pub max_drift_ratio: f64,
    pub mean_abs_drift: f64,
    pub mean_u: f64,
}

pub const MAX_LISTED: usize = 100;

pub struct ComparisonInput<'a> {
    pub sol: &'a DiscreteSolution,
    pub xi: &'a [f64],
    pub gen: &'a GeneratorSpec,
}

/// Checks `Y ≤ Y'` for two solutions on the same bundle.
///
/// With `enforce_preconditions` a failed `ξ ≤ ξ'` or driver ordering is a
/// precondition error naming the path and node; otherwise failures are
/// listed in the witness and the violation set is still computed.
pub fn compare_solutions(
    a: ComparisonInput,
    b: ComparisonInput,
    side: ComparisonSide,
    bundle: &PathBundle,
    params: &WeightParams,
    full: &WeightTrack,
    tol_comp: f64,
    enforce_preconditions: bool,
) -> Result<ComparisonWitness> {
    if a.gen.k != 1 || b.gen.k != 1 || a.sol.k != 1 || b.sol.k != 1 {
        return Err(config("comparison is defined for k = 1"));
    }
    a.sol.check_aligned(bundle)?;
    b.sol.check_aligned(bundle)?;
    let d = a.sol.d;
    let mut failures = Vec::new();
    let mut fail = |msg: String| -> Result<()> {
        if enforce_preconditions {
            return Err(LabError::Precondition(msg));
        }
        if failures.len() < MAX_LISTED {
            failures.push(msg);
        }
        Ok(())
    };
    for q in 0..bundle.n_paths {
        if a.xi[q] > b.xi[q] + 1e-12 * (1.0 + b.xi[q].abs()) {
            fail(format!("ξ > ξ' on path {q} ({} > {})", a.xi[q], b.xi[q]))?;
        }
    }
    let on = match side {
        ComparisonSide::I => b.sol,
        ComparisonSide::Ii => a.sol,
    };
    let order = crate::par::map_indexed(bundle.n_paths, |q| {
        (0..bundle.tau[q]).find_map(|i| {
            let st = bundle.state(q, i);
            let (y, z) = (on.y_at(q, i), on.z_at(q, i));
            let ga = a.gen.eval_vec(&st, y, z)[0];
            let gb = b.gen.eval_vec(&st, y, z)[0];
            (ga > gb + 1e-12 * (1.0 + gb.abs())).then_some((i, ga, gb))
        })
    });
    for (q, o) in order.into_iter().enumerate() {
        if let Some((i, ga, gb)) = o {
            fail(format!("driver ordering fails on path {q} at node {i} ({ga} > {gb})"))?;
        }
    }
    let nn = bundle.n_nodes();
    let mut all = Vec::new();
    let mut n_checked = 0;
    let mut u_plus = vec![0.0; bundle.n_paths * nn];
    let mut sum_u = 0.0;
    for q in 0..bundle.n_paths {
        for i in 0..=bundle.tau[q] {
            let u = a.sol.y_at(q, i)[0] - b.sol.y_at(q, i)[0];
            sum_u += u;
            n_checked += 1;
            u_plus[q * nn + i] = u.max(0.0);
            if u > tol_comp {
                all.push(Violation { path: q, node: i, u_plus: u });
            }
        }
    }
    let n_violations = all.len();
    all.sort_by(|x, y| y.u_plus.total_cmp(&x.u_plus).then(x.path.cmp(&y.path)).then(x.node.cmp(&y.node)));
    all.truncate(MAX_LISTED);
    let max_u_plus = u_plus.iter().copied().fold(0.0, f64::max);
    let weighted_sup_u_plus = sup_norm(bundle, &u_plus, 1, full, params.p, None)?.value;
    // b_s = ν_s V_s / |V_s| with V = Z − Z'
    let mut max_ratio: f64 = 0.0;
    let mut sum_b = 0.0;
    let mut nb = 0usize;
    for q in 0..bundle.n_paths {
        for i in 0..bundle.tau[q] {
            let v: Vec<f64> = (0..d).map(|c| a.sol.z_at(q, i)[c] - b.sol.z_at(q, i)[c]).collect();
            let nu = bundle.track_value(Process::Nu.name(), q, i);
            let vn = norm(&v);
            let bs: f64 = if vn > 0.0 { norm(&v.iter().map(|x| nu * x / vn).collect::<Vec<_>>()) } else { 0.0 };
            if nu > 0.0 {
                max_ratio = max_ratio.max(bs / nu);
            }
            sum_b += bs;
            nb += 1;
        }
    }
    Ok(ComparisonWitness {
        side,
        tol_comp,
        precondition_failures: failures,
        n_checked,
        n_violations,
        violations: all,
        max_u_plus,
        weighted_sup_u_plus,
        q: comparison_exponent(params.p, params.rho),
        max_drift_ratio: max_ratio,
        mean_abs_drift: if nb > 0 { sum_b / nb as f64 } else { 0.0 },
        mean_u: sum_u / n_checked.max(1) as f64,
    })
}

/// Probe check of `⟨ŷ, g(t,y,z)⟩ ≤ u|y| + v|z| + f` with `ŷ = y/|y|` (0 at 0).
pub fn verify_assumption_a(gen: &GeneratorSpec, spec: &AprioriBoundSpec, bundle: &PathBundle, probes: usize, seed: u64) -> Result<CheckReport> {
    let nn = bundle.n_nodes();
    run_probes("A", bundle, ProbeShape::Single, gen.k, gen.k * gen.d, probes, seed, |pr: &Probe| {
        let st = bundle.state(pr.path, pr.node);
        let g = gen.eval_vec(&st, &pr.y1, &pr.z1);
        let yn = norm(&pr.y1);
        let lhs = if yn > 0.0 { pr.y1.iter().zip(&g).map(|(y, g)| y * g).sum::<f64>() / yn } else { 0.0 };
        let at = pr.path * nn + pr.node;
        let rhs = spec.u[at] * yn + spec.v[at] * norm(&pr.z1) + spec.f[at];
        Margin::new(lhs, rhs, lhs.abs() + rhs.abs())
    })
}
