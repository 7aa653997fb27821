//! Regression-based backward induction and the outer schemes built on it:
//! Picard iteration in `z`, the subdivided Picard scheme, and the truncation
//! scheme.
//!
//! One backward sweep computes, at each node `i` from the last step down,
//!
//! ```text
//! Ŷ_i = E[Y_{i+1} | F_i],   Z_i = E[(Y_{i+1} − Ŷ_i) ΔB_i | F_i] / Δ_i,
//! Y_i = Ŷ_i + Δ_i g(t_i, Y_i, Z'_i)
//! ```
//!
//! with `Z'` either the freshly computed `Z_i` or a frozen previous iterate.
//! Conditional expectations are regressions over the paths with `i < τ_p`.
//! With weighted coordinates the regressions act on `e^{A_{i+1}} Y_{i+1}`,
//! `A` the running integral of the full weight exponent (which is known at
//! node `i` under the left rule), and the result is scaled back.

mod basis;
mod implicit;
mod solution;
mod subdivision;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use basis::{BasisConfig, Design, Features, NodeRegression, RegressionCache, MAX_CONDITION};
pub use implicit::{solve_step, Fallbacks, ImplicitConfig, StepMethod};
pub use solution::{read_solution, write_solution, DiscreteSolution, ResidualReport, SolutionMeta, SOLUTION_MAGIC, SOLUTION_VERSION};
pub use subdivision::{build_subdivision, fitted_ratio, SubdivisionPlan};

use crate::error::{config, LabError, Result};
use crate::generators::{truncated_data, Assumption, GeneratorSpec, Process, WeightParams};
use crate::par;
use crate::timepaths::{accumulate_weight, norm, PathBundle, WeightTrack, WeightVariant, SATURATION_LOG};
use crate::wnorms::{h_norm, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Exponent of the `H^q` distance between iterates.
    pub q: f64,
    pub thetas: Vec<f64>,
    /// Require `∫_0^τ ν² ≤ M` up to one step.
    pub l1_route: bool,
    /// Consecutive non-decreasing distances that count as divergence.
    pub stall: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { max_iters: 30, tol: 1e-6, q: 2.0, thetas: vec![0.25, 0.5, 0.75], l1_route: false, stall: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub basis: BasisConfig,
    pub weighted_coordinates: bool,
    pub implicit: ImplicitConfig,
    pub picard: PicardConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            basis: BasisConfig::default(),
            weighted_coordinates: true,
            implicit: ImplicitConfig::default(),
            picard: PicardConfig::default(),
        }
    }
}

/// Regression cache and weights for one bundle.
pub struct Solver<'a> {
    pub bundle: &'a PathBundle,
    pub params: WeightParams,
    pub config: SolverConfig,
    pub cache: RegressionCache,
    pub full: WeightTrack,
    pub beta_mu: WeightTrack,
}

fn stalled(h: &[f64], w: usize) -> bool {
    h.len() > w && h[h.len() - w - 1..].windows(2).all(|s| s[1] >= s[0])
}

impl<'a> Solver<'a> {
    /// Coefficient tracks must already be filled.
    pub fn new(bundle: &'a PathBundle, params: WeightParams, cfg: SolverConfig) -> Result<Self> {
        params.validate()?;
        let p = &cfg.picard;
        if !(p.q > 0.0 && p.tol >= 0.0 && p.max_iters >= 1 && p.stall >= 1) || p.thetas.iter().any(|t| !(*t > 0.0)) {
            return Err(config(format!("invalid Picard settings {p:?}")));
        }
        let cache = RegressionCache::build(bundle, &cfg.basis)?;
        let full = accumulate_weight(bundle, &params, WeightVariant::FullA)?;
        let beta_mu = accumulate_weight(bundle, &params, WeightVariant::BetaMuOnly)?;
        Ok(Self { bundle, params, config: cfg, cache, full, beta_mu })
    }

    fn check_problem(&self, gen: &GeneratorSpec, xi: &[f64]) -> Result<()> {
        if gen.d != self.bundle.d {
            return Err(config(format!("generator has d = {} but the bundle has d = {}", gen.d, self.bundle.d)));
        }
        if xi.len() != self.bundle.n_paths * gen.k {
            return Err(config(format!("terminal value has {} entries, expected {}", xi.len(), self.bundle.n_paths * gen.k)));
        }
        if let Some(j) = xi.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Data(format!("terminal value is not finite on path {}", j / gen.k)));
        }
        Ok(())
    }

    /// One backward sweep over `sol`, updating `(p, i)` with `i < upto[p]`
    /// (default `τ_p`). Returns the per-node martingale residual RMS.
    fn sweep(&self, gen: &GeneratorSpec, sol: &mut DiscreteSolution, frozen_z: Option<&[f64]>, upto: Option<&[usize]>) -> Result<(Vec<f64>, Fallbacks)> {
        let b = self.bundle;
        let (k, d) = (gen.k, gen.d);
        let kd = k * d;
        let ns = b.n_steps();
        let mut rms = vec![0.0; b.n_nodes()];
        let mut fb = Fallbacks::default();
        for i in (0..ns).rev() {
            let act = &self.cache.nodes[i].active;
            let n = act.len();
            if n == 0 {
                continue;
            }
            let des = self.cache.design(i);
            let dt = b.grid.dt(i);
            let scale: Vec<f64> = act
                .iter()
                .map(|&p| if self.config.weighted_coordinates { self.full.cum(p, i + 1).min(SATURATION_LOG).exp() } else { 1.0 })
                .collect();
            let mut t1 = vec![0.0; n * k];
            for (j, &p) in act.iter().enumerate() {
                for (o, v) in t1[j * k..(j + 1) * k].iter_mut().zip(sol.y_at(p, i + 1)) {
                    *o = scale[j] * v;
                }
            }
            let f1 = self.cache.fit(&des, &t1, k)?;
            let mut t2 = vec![0.0; n * kd];
            for (j, &p) in act.iter().enumerate() {
                let db = b.db(p, i);
                for a in 0..k {
                    let r = t1[j * k + a] - f1[j * k + a];
                    for c in 0..d {
                        t2[j * kd + a * d + c] = r * db[c];
                    }
                }
            }
            let mut zc = self.cache.fit(&des, &t2, kd)?;
            for (row, s) in zc.chunks_mut(kd).zip(&scale) {
                row.iter_mut().for_each(|v| *v /= s * dt);
            }
            // per block of paths: (ŷ, updated y, z, method); y and z stay
            // empty for paths left untouched by `upto`
            let blocks = par::map_indexed(n.div_ceil(par::BLOCK), |bl| {
                let r = bl * par::BLOCK..((bl + 1) * par::BLOCK).min(n);
                let mut yh = vec![0.0; r.len() * k];
                let mut ys = vec![0.0; r.len() * k];
                let mut methods = Vec::with_capacity(r.len());
                for (jj, j) in r.clone().enumerate() {
                    let p = act[j];
                    let s = scale[j];
                    let yhat = &mut yh[jj * k..(jj + 1) * k];
                    yhat.iter_mut().zip(&f1[j * k..(j + 1) * k]).for_each(|(o, v)| *o = v / s);
                    if upto.is_some_and(|u| i >= u[p]) {
                        methods.push(None);
                        continue;
                    }
                    let zd = match frozen_z {
                        Some(zf) => &zf[(p * ns + i) * kd..(p * ns + i + 1) * kd],
                        None => &zc[j * kd..(j + 1) * kd],
                    };
                    let st = b.state(p, i);
                    match solve_step(gen, &st, yhat, zd, dt, &self.config.implicit) {
                        Some((y, m)) => {
                            ys[jj * k..(jj + 1) * k].copy_from_slice(&y);
                            methods.push(Some(m));
                        }
                        None => return Err(p),
                    }
                }
                Ok((yh, ys, methods))
            });
            let mut yhats = Vec::with_capacity(n * k);
            for (bl, r) in blocks.into_iter().enumerate() {
                let (yh, ys, methods) = r.map_err(|p| LabError::Scheme {
                    node: i,
                    message: format!("implicit step did not converge on path {p} (fixed point, Newton and bisection exhausted)"),
                })?;
                for (jj, m) in methods.into_iter().enumerate() {
                    let Some(m) = m else { continue };
                    let j = bl * par::BLOCK + jj;
                    let p = act[j];
                    let ya = (p * b.n_nodes() + i) * k;
                    sol.y[ya..ya + k].copy_from_slice(&ys[jj * k..(jj + 1) * k]);
                    let za = (p * ns + i) * kd;
                    sol.z[za..za + kd].copy_from_slice(&zc[j * kd..(j + 1) * kd]);
                    fb.add(m);
                }
                yhats.extend_from_slice(&yh);
            }
            let sol_ref = &*sol;
            let sq = par::tree_sum(n, |j| {
                let p = act[j];
                let (y1, z, db) = (sol_ref.y_at(p, i + 1), sol_ref.z_at(p, i), b.db(p, i));
                (0..k)
                    .map(|a| {
                        let zdb: f64 = (0..d).map(|c| z[a * d + c] * db[c]).sum();
                        (y1[a] - yhats[j * k + a] - zdb).powi(2)
                    })
                    .sum()
            });
            rms[i] = (sq / n as f64).sqrt();
        }
        Ok((rms, fb))
    }

    /// Backward induction for a driver that ignores `z`.
    pub fn solve_backward_zfree(&self, gen: &GeneratorSpec, xi: &[f64]) -> Result<DiscreteSolution> {
        if gen.z_dependent {
            return Err(LabError::Precondition(format!("generator '{}' depends on z", gen.name)));
        }
        self.check_problem(gen, xi)?;
        let mut sol = DiscreteSolution::terminal(self.bundle, xi, gen.k, gen.d);
        let (rms, fb) = self.sweep(gen, &mut sol, None, None)?;
        sol.meta = self.meta("backward_zfree", gen);
        sol.meta.iterations = 1;
        sol.meta.converged = true;
        sol.meta.node_residual_rms = rms;
        sol.meta.fallbacks = fb;
        Ok(sol)
    }

    fn meta(&self, scheme: &str, gen: &GeneratorSpec) -> SolutionMeta {
        SolutionMeta { scheme: scheme.into(), generator: gen.name.clone(), config: self.config.clone(), ..SolutionMeta::default() }
    }

    /// `H^q` distance with the `βμ` weight, optionally on a window.
    pub fn distance(&self, a: &DiscreteSolution, b: &DiscreteSolution, q: f64, window: Option<&Window>) -> Result<f64> {
        let (dy, dz) = a.difference(b);
        Ok(h_norm(self.bundle, &dy, &dz, a.k, a.d, &self.beta_mu, q, window)?.value)
    }

    fn picard_preconditions(&self, gen: &GeneratorSpec) -> Result<()> {
        if gen.z_dependent
            && !gen.declared.iter().any(|a| matches!(a, Assumption::H5 | Assumption::H6 | Assumption::H6p))
        {
            return Err(LabError::Precondition(format!(
                "generator '{}' depends on z but declares none of H5, H6, H6'",
                gen.name
            )));
        }
        if self.config.picard.l1_route {
            verify_l1_cap(self.bundle, self.params.m)?;
        }
        Ok(())
    }

    /// Picard iteration from `(0, 0)` with `z` frozen at the previous iterate.
    pub fn solve_picard(&self, gen: &GeneratorSpec, xi: &[f64]) -> Result<DiscreteSolution> {
        self.picard_from(gen, xi, None)
    }

    /// Picard iteration started from `init` before `τ` when given.
    fn picard_from(&self, gen: &GeneratorSpec, xi: &[f64], init: Option<&DiscreteSolution>) -> Result<DiscreteSolution> {
        self.check_problem(gen, xi)?;
        self.picard_preconditions(gen)?;
        let pc = &self.config.picard;
        let mut cur = DiscreteSolution::terminal(self.bundle, xi, gen.k, gen.d);
        if let Some(w) = init {
            let (nn, k) = (self.bundle.n_nodes(), gen.k);
            for p in 0..self.bundle.n_paths {
                let r = p * nn * k..(p * nn + self.bundle.tau[p]) * k;
                cur.y[r.clone()].copy_from_slice(&w.y[r]);
            }
            cur.z.copy_from_slice(&w.z);
        }
        let mut meta = self.meta("picard", gen);
        let mut thetas: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for it in 1..=pc.max_iters {
            let mut next = cur.clone();
            let (rms, fb) = self.sweep(gen, &mut next, Some(&cur.z), None).map_err(|e| blown_up(e, &meta.picard_history))?;
            let dist = self.distance(&next, &cur, pc.q, None)?;
            for &th in &pc.thetas {
                thetas.entry(format!("{th}")).or_default().push(self.distance(&next, &cur, th, None)?);
            }
            meta.picard_history.push(dist);
            meta.fallbacks.merge(&fb);
            meta.node_residual_rms = rms;
            meta.iterations = it;
            cur = next;
            if !gen.z_dependent || dist <= pc.tol {
                meta.converged = true;
                break;
            }
            if !dist.is_finite() || stalled(&meta.picard_history, pc.stall) {
                return Err(LabError::Divergence { history: meta.picard_history });
            }
        }
        meta.theta_histories = thetas;
        cur.meta = meta;
        Ok(cur)
    }

    /// Solves interval by interval from the last, chaining terminal values.
    ///
    /// On interval `j` the `Z` iterate is reset to zero on the interval, and
    /// each Picard sweep updates every `(p, i)` with `i < τ_{j,p}`. The
    /// distance between iterates is measured on `[τ_{j-1}, τ_j]`.
    pub fn solve_subdivided(&self, gen: &GeneratorSpec, xi: &[f64], plan: &SubdivisionPlan) -> Result<DiscreteSolution> {
        self.check_problem(gen, xi)?;
        self.picard_preconditions(gen)?;
        plan.check(self.bundle)?;
        let pc = &self.config.picard;
        let b = self.bundle;
        let (k, kd) = (gen.k, gen.k * gen.d);
        let (nn, ns) = (b.n_nodes(), b.n_steps());
        let mut cur = DiscreteSolution::terminal(b, xi, gen.k, gen.d);
        let mut meta = self.meta("subdivided", gen);
        meta.converged = true;
        let mut thetas: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for j in (1..=plan.n).rev() {
            let lo: Vec<usize> = (0..b.n_paths).map(|p| plan.tau_j(p, j - 1)).collect();
            let hi: Vec<usize> = (0..b.n_paths).map(|p| plan.tau_j(p, j)).collect();
            for p in 0..b.n_paths {
                for i in lo[p]..hi[p] {
                    cur.y[(p * nn + i) * k..(p * nn + i + 1) * k].fill(0.0);
                    cur.z[(p * ns + i) * kd..(p * ns + i + 1) * kd].fill(0.0);
                }
            }
            let window = Window::between(lo, hi.clone())?;
            let wrap = |e: LabError| LabError::Interval { interval: j, source: Box::new(e) };
            let mut hist = Vec::new();
            let mut done = false;
            for _ in 0..pc.max_iters {
                let mut next = cur.clone();
                let (rms, fb) = self.sweep(gen, &mut next, Some(&cur.z), Some(&hi)).map_err(|e| wrap(blown_up(e, &hist)))?;
                let dist = self.distance(&next, &cur, pc.q, Some(&window))?;
                for &th in &pc.thetas {
                    thetas.entry(format!("{th}")).or_default().push(self.distance(&next, &cur, th, Some(&window))?);
                }
                hist.push(dist);
                meta.fallbacks.merge(&fb);
                meta.node_residual_rms = rms;
                meta.iterations += 1;
                cur = next;
                if !gen.z_dependent || dist <= pc.tol {
                    done = true;
                    break;
                }
                if !dist.is_finite() || stalled(&hist, pc.stall) {
                    return Err(wrap(LabError::Divergence { history: hist }));
                }
            }
            meta.converged &= done;
            meta.picard_history.extend_from_slice(&hist);
            meta.interval_ratios.push(fitted_ratio(&hist));
            meta.interval_histories.push(hist);
        }
        // intervals were processed last to first
        meta.interval_histories.reverse();
        meta.interval_ratios.reverse();
        meta.fitted_ratio = meta.interval_ratios.iter().flatten().copied().reduce(f64::max);
        meta.theta_histories = thetas;
        cur.meta = meta;
        Ok(cur)
    }

    /// Solves with truncated data for each level of `schedule` and records
    /// the weighted `H^p` distance between consecutive solutions.
    pub fn solve_via_truncation(&self, gen: &GeneratorSpec, xi: &[f64], schedule: &[f64]) -> Result<(DiscreteSolution, Vec<f64>)> {
        if schedule.is_empty() {
            return Err(config("truncation schedule is empty"));
        }
        if schedule.iter().any(|n| !(*n > 0.0 && n.is_finite())) || schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config(format!("truncation schedule must be positive and increasing, got {schedule:?}")));
        }
        self.check_problem(gen, xi)?;
        // each level starts from the previous level's solution
        let mut prev: Option<DiscreteSolution> = None;
        let mut hist = Vec::new();
        let mut converged = true;
        for &n in schedule {
            let (xi_n, g_n) = truncated_data(gen, self.bundle, xi, n, &self.full);
            let sol = self.picard_from(&g_n, &xi_n, prev.as_ref())?;
            converged &= sol.meta.converged;
            if let Some(pv) = &prev {
                let (dy, dz) = sol.difference(pv);
                hist.push(h_norm(self.bundle, &dy, &dz, gen.k, gen.d, &self.full, self.params.p, None)?.value);
            }
            prev = Some(sol);
        }
        let mut sol = prev.expect("schedule is non-empty");
        sol.meta.scheme = "truncation".into();
        sol.meta.converged = converged;
        sol.meta.schedule = schedule.to_vec();
        sol.meta.cauchy_history = hist.clone();
        sol.meta.generator = gen.name.clone();
        Ok((sol, hist))
    }

    /// One-step residuals, terminal mismatch and per-node measurability.
    pub fn residual_report(&self, sol: &DiscreteSolution, gen: &GeneratorSpec, xi: &[f64]) -> Result<ResidualReport> {
        let b = self.bundle;
        sol.check_aligned(b)?;
        self.check_problem(gen, xi)?;
        let (k, d) = (gen.k, gen.d);
        let ns = b.n_steps();
        // per path: (sum, count, max, argmax node) and per-node sums
        let rows = par::map_indexed(b.n_paths, |p| {
            let mut g = vec![0.0; k];
            let mut per = vec![0.0; ns];
            let mut mx = (0.0f64, 0usize);
            for i in 0..b.tau[p] {
                let st = b.state(p, i);
                let (y0, y1, z, db) = (sol.y_at(p, i), sol.y_at(p, i + 1), sol.z_at(p, i), b.db(p, i));
                gen.eval(&st, y0, z, &mut g);
                let r: Vec<f64> = (0..k)
                    .map(|a| y0[a] - y1[a] - g[a] * b.grid.dt(i) + (0..d).map(|c| z[a * d + c] * db[c]).sum::<f64>())
                    .collect();
                let r = norm(&r);
                per[i] = r;
                if r > mx.0 || r.is_nan() {
                    mx = (r, i);
                }
            }
            let term = norm(&sol.y_at(p, b.tau[p]).iter().zip(&xi[p * k..(p + 1) * k]).map(|(a, c)| a - c).collect::<Vec<_>>());
            (per, mx, term)
        });
        let mut total = 0.0;
        let mut count = 0usize;
        let mut max_abs = 0.0;
        let (mut ap, mut an) = (0, 0);
        let mut node_sum = vec![0.0; ns];
        let mut node_cnt = vec![0usize; ns];
        let mut terminal_mismatch = 0.0f64;
        for (p, (per, mx, term)) in rows.iter().enumerate() {
            for i in 0..b.tau[p] {
                node_sum[i] += per[i];
                node_cnt[i] += 1;
            }
            total += per.iter().sum::<f64>();
            count += b.tau[p];
            if mx.0 > max_abs || mx.0.is_nan() {
                max_abs = mx.0;
                ap = p;
                an = mx.1;
            }
            terminal_mismatch = terminal_mismatch.max(*term);
        }
        let per_node_mean_abs = node_sum.iter().zip(&node_cnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
        let mut measurability_rms = vec![0.0; b.n_nodes()];
        for (i, m) in measurability_rms.iter_mut().enumerate().take(ns) {
            let act = &self.cache.nodes[i].active;
            if act.is_empty() {
                continue;
            }
            let des = self.cache.design(i);
            let t: Vec<f64> = act.iter().flat_map(|&p| sol.y_at(p, i).to_vec()).collect();
            let f = self.cache.fit(&des, &t, k)?;
            let sq: f64 = t.iter().zip(&f).map(|(a, c)| (a - c).powi(2)).sum();
            *m = (sq / act.len() as f64).sqrt();
        }
        Ok(ResidualReport {
            mean_abs: if count > 0 { total / count as f64 } else { 0.0 },
            max_abs,
            argmax_path: ap,
            argmax_node: an,
            per_node_mean_abs,
            terminal_mismatch,
            measurability_rms,
        })
    }
}

/// A numeric failure after some iterations means the iterates blew up.
fn blown_up(e: LabError, history: &[f64]) -> LabError {
    match e {
        LabError::Numeric { .. } if !history.is_empty() => LabError::Divergence { history: history.to_vec() },
        e => e,
    }
}

/// Checks `∫_0^τ ν² ≤ M` on every path, allowing the last step to overshoot.
pub fn verify_l1_cap(bundle: &PathBundle, m: f64) -> Result<()> {
    let nu = Process::Nu.name();
    for p in 0..bundle.n_paths {
        let mut cum = 0.0;
        let mut last = 0.0;
        for i in 0..bundle.tau[p] {
            last = bundle.track_value(nu, p, i).powi(2) * bundle.grid.dt(i);
            cum += last;
        }
        if cum - last > m * (1.0 + 1e-12) {
            return Err(LabError::Precondition(format!(
                "∫ν² = {cum} exceeds M = {m} on path {p}; cap τ by the ν² integral first"
            )));
        }
    }
    Ok(())
}
