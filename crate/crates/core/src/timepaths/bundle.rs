use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::grid::TimeGrid;
use crate::error::{config, data, Result};
use crate::par;

/// Everything a driver or coefficient may look at on one path at one node.
#[derive(Debug, Clone, Copy)]
pub struct NodeState<'a> {
    pub path: usize,
    pub node: usize,
    pub t: f64,
    /// Brownian position `B_t` (length `d`).
    pub b: &'a [f64],
    pub abs_b: f64,
    /// `sup_{s <= t} |B_s|` over grid nodes.
    pub sup_abs_b: f64,
    /// Auxiliary path functionals in declaration order.
    pub aux: &'a [f64],
}

pub type PathFn = Arc<dyn Fn(&NodeState) -> f64 + Send + Sync>;

/// How an auxiliary functional is built from its integrand `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AuxKind {
    /// `f` evaluated at the current node.
    Pointwise,
    /// Left-rule running integral `sum_{j<i} f_j dt_j`.
    RunningIntegral,
    /// `1_{t_i <= sigma}` with `sigma` the first node where `f >= level`.
    UntilLevel(f64),
}

/// Named auxiliary path functional (running integrals, indicators).
///
/// Functionals are evaluated in list order. A pointwise entry may read the
/// current-node values of earlier entries; the running kinds read the full
/// state at the previous node.
#[derive(Clone)]
pub struct AuxDef {
    pub name: String,
    pub kind: AuxKind,
    pub f: PathFn,
}

impl std::fmt::Debug for AuxDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuxDef")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl AuxDef {
    pub fn new(name: impl Into<String>, kind: AuxKind, f: PathFn) -> Self {
        Self { name: name.into(), kind, f }
    }
}

/// Simulated Brownian paths plus everything derived from them on a shared grid.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub d: usize,
    pub seed: u64,
    /// `[path][step][dim]`, already scaled by `sqrt(dt)`.
    pub increments: Vec<f64>,
    /// Realized stopping index per path.
    pub tau: Vec<usize>,
    /// Stopping rule never fired before `t_max`.
    pub censored: Vec<bool>,
    /// Coefficient tracks `[path][node]`, keyed by process name.
    pub tracks: BTreeMap<String, Vec<f64>>,
    pub aux_names: Vec<String>,
    /// `[path][node][aux]`.
    pub aux: Vec<f64>,
    positions: Vec<f64>,
    abs_b: Vec<f64>,
    sup_abs_b: Vec<f64>,
}

impl PathBundle {
    /// Builds a bundle from stored increments, recomputing positions.
    pub fn from_increments(grid: TimeGrid, n_paths: usize, d: usize, seed: u64, increments: Vec<f64>) -> Result<Self> {
        if n_paths == 0 || d == 0 {
            return Err(config("n_paths and d must be at least 1"));
        }
        let n = grid.n_steps;
        if increments.len() != n_paths * n * d {
            return Err(data(format!(
                "increment array has {} values, expected {}",
                increments.len(),
                n_paths * n * d
            )));
        }
        let nn = n + 1;
        let mut positions = vec![0.0; n_paths * nn * d];
        let mut abs_b = vec![0.0; n_paths * nn];
        let mut sup_abs_b = vec![0.0; n_paths * nn];
        par::for_each_chunk_pair_mut(&mut positions, nn * d, &mut abs_b, nn, |p, pos, ab| {
            let inc = &increments[p * n * d..(p + 1) * n * d];
            for i in 0..n {
                for k in 0..d {
                    pos[(i + 1) * d + k] = pos[i * d + k] + inc[i * d + k];
                }
                ab[i + 1] = norm(&pos[(i + 1) * d..(i + 2) * d]);
            }
        });
        for (sup, ab) in sup_abs_b.chunks_mut(nn).zip(abs_b.chunks(nn)) {
            let mut m = 0.0f64;
            for (s, &a) in sup.iter_mut().zip(ab) {
                m = m.max(a);
                *s = m;
            }
        }
        Ok(Self {
            grid,
            n_paths,
            d,
            seed,
            increments,
            tau: vec![n; n_paths],
            censored: vec![false; n_paths],
            tracks: BTreeMap::new(),
            aux_names: Vec::new(),
            aux: Vec::new(),
            positions,
            abs_b,
            sup_abs_b,
        })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.grid.n_steps + 1
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    #[inline]
    pub fn b(&self, path: usize, node: usize) -> &[f64] {
        let at = (path * self.n_nodes() + node) * self.d;
        &self.positions[at..at + self.d]
    }

    #[inline]
    pub fn db(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.grid.n_steps + step) * self.d;
        &self.increments[at..at + self.d]
    }

    #[inline]
    pub fn abs_b(&self, path: usize, node: usize) -> f64 {
        self.abs_b[path * self.n_nodes() + node]
    }

    #[inline]
    pub fn sup_abs_b(&self, path: usize, node: usize) -> f64 {
        self.sup_abs_b[path * self.n_nodes() + node]
    }

    pub fn state(&self, path: usize, node: usize) -> NodeState<'_> {
        let na = self.aux_names.len();
        let at = (path * self.n_nodes() + node) * na;
        NodeState {
            path,
            node,
            t: self.grid.nodes[node],
            b: self.b(path, node),
            abs_b: self.abs_b(path, node),
            sup_abs_b: self.sup_abs_b(path, node),
            aux: if na == 0 { &[] } else { &self.aux[at..at + na] },
        }
    }

    /// Value of track `name` at `(path, node)`; missing tracks read as zero.
    #[inline]
    pub fn track_value(&self, name: &str, path: usize, node: usize) -> f64 {
        self.tracks
            .get(name)
            .map_or(0.0, |v| v[path * self.n_nodes() + node])
    }

    pub fn track(&self, name: &str) -> Option<&[f64]> {
        self.tracks.get(name).map(Vec::as_slice)
    }

    pub fn aux_index(&self, name: &str) -> Option<usize> {
        self.aux_names.iter().position(|n| n == name)
    }

    /// Values of a named scalar functional at every node of `path`.
    ///
    /// Accepts `t`, `abs_b`, `sup_abs_b`, `b1..bd`, track names and aux names.
    pub fn functional(&self, name: &str) -> Result<Box<dyn Fn(usize, usize) -> f64 + Sync + '_>> {
        match name {
            "t" => return Ok(Box::new(move |_, i| self.grid.nodes[i])),
            "abs_b" | "absb" => return Ok(Box::new(move |p, i| self.abs_b(p, i))),
            "sup_abs_b" | "supb" => return Ok(Box::new(move |p, i| self.sup_abs_b(p, i))),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix('b') {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 && k <= self.d {
                    return Ok(Box::new(move |p, i| self.b(p, i)[k - 1]));
                }
                return Err(config(format!("Brownian component {name} out of range 1..={}", self.d)));
            }
        }
        if let Some(v) = self.tracks.get(name) {
            let nn = self.n_nodes();
            return Ok(Box::new(move |p, i| v[p * nn + i]));
        }
        if let Some(a) = self.aux_index(name) {
            let nn = self.n_nodes();
            let na = self.aux_names.len();
            return Ok(Box::new(move |p, i| self.aux[(p * nn + i) * na + a]));
        }
        Err(config(format!("unknown path functional or process '{name}'")))
    }

    /// Fills the auxiliary functionals, replacing any previous ones.
    pub fn evaluate_aux(&mut self, defs: &[AuxDef]) -> Result<()> {
        let na = defs.len();
        let nn = self.n_nodes();
        self.aux_names = defs.iter().map(|a| a.name.clone()).collect();
        let mut aux = vec![0.0; self.n_paths * nn * na];
        if na > 0 {
            let this = &*self;
            par::for_each_chunk_mut(&mut aux, nn * na, |p, row| {
                for i in 0..nn {
                    for (a, def) in defs.iter().enumerate() {
                        let v = match def.kind {
                            AuxKind::Pointwise => {
                                let st = this.partial_state(p, i, &row[i * na..(i + 1) * na]);
                                (def.f)(&st)
                            }
                            AuxKind::RunningIntegral => {
                                if i == 0 {
                                    0.0
                                } else {
                                    let st = this.partial_state(p, i - 1, &row[(i - 1) * na..i * na]);
                                    row[(i - 1) * na + a] + (def.f)(&st) * this.grid.dt(i - 1)
                                }
                            }
                            AuxKind::UntilLevel(level) => {
                                if i == 0 {
                                    1.0
                                } else {
                                    let st = this.partial_state(p, i - 1, &row[(i - 1) * na..i * na]);
                                    let fired = (def.f)(&st) >= level;
                                    if fired { 0.0 } else { row[(i - 1) * na + a] }
                                }
                            }
                        };
                        row[i * na + a] = v;
                    }
                }
            });
        }
        if let Some(pos) = aux.iter().position(|v| !v.is_finite()) {
            let (p, i, a) = (pos / (nn * na), (pos / na) % nn, pos % na);
            return Err(data(format!(
                "auxiliary '{}' is non-finite on path {p} at node {i}",
                self.aux_names[a]
            )));
        }
        self.aux = aux;
        Ok(())
    }

    fn partial_state<'s>(&'s self, path: usize, node: usize, aux: &'s [f64]) -> NodeState<'s> {
        NodeState {
            path,
            node,
            t: self.grid.nodes[node],
            b: self.b(path, node),
            abs_b: self.abs_b(path, node),
            sup_abs_b: self.sup_abs_b(path, node),
            aux,
        }
    }

    /// Evaluates `f` on every `(path, node)` and stores it as track `name`.
    ///
    /// Values must be finite and nonnegative; nodes beyond `τ` are set to 0.
    pub fn fill_track(&mut self, name: &str, f: &PathFn) -> Result<()> {
        let nn = self.n_nodes();
        let mut v = vec![0.0; self.n_paths * nn];
        let this = &*self;
        par::for_each_chunk_mut(&mut v, nn, |p, row| {
            for (i, out) in row.iter_mut().enumerate().take(this.tau[p] + 1) {
                *out = f(&this.state(p, i));
            }
        });
        if let Some(pos) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(data(format!(
                "process '{name}' returned {} on path {} at node {}",
                v[pos],
                pos / nn,
                pos % nn
            )));
        }
        self.tracks.insert(name.to_string(), v);
        Ok(())
    }

    /// Zeroes every coefficient track beyond each path's `τ`.
    pub fn mask_beyond_tau(&mut self) {
        let nn = self.n_nodes();
        let tau = &self.tau;
        for v in self.tracks.values_mut() {
            par::for_each_chunk_mut(v, nn, |p, row| row[tau[p] + 1..].fill(0.0));
        }
    }

    /// Moment sanity of the increments; see [`MomentReport`].
    pub fn increment_diagnostics(&self) -> MomentReport {
        let n = self.grid.n_steps;
        let d = self.d;
        let np = self.n_paths as f64;
        let stats = par::tree_sum_vec(self.n_paths, n * d * 2 + n * d * d, |p, acc| {
            for i in 0..n {
                let db = self.db(p, i);
                for k in 0..d {
                    acc[(i * d + k) * 2] += db[k];
                    acc[(i * d + k) * 2 + 1] += db[k] * db[k];
                    for l in 0..d {
                        acc[2 * n * d + (i * d + k) * d + l] += db[k] * db[l];
                    }
                }
            }
        });
        let mut mean_ok = 0usize;
        let mut var_ok = 0usize;
        let mut max_corr = 0.0f64;
        for i in 0..n {
            let h = self.grid.dt(i);
            for k in 0..d {
                let m = stats[(i * d + k) * 2] / np;
                let v = stats[(i * d + k) * 2 + 1] / np - m * m;
                if (m / h.sqrt()).abs() <= 5.0 / np.sqrt() {
                    mean_ok += 1;
                }
                if (v / h - 1.0).abs() <= 0.2 {
                    var_ok += 1;
                }
                for l in (k + 1)..d {
                    let c = stats[2 * n * d + (i * d + k) * d + l] / np;
                    let vl = stats[(i * d + l) * 2 + 1] / np;
                    let vk = stats[(i * d + k) * 2 + 1] / np;
                    max_corr = max_corr.max((c / (vk * vl).sqrt()).abs());
                }
            }
        }
        let cols = (n * d) as f64;
        MomentReport {
            mean_ok_fraction: mean_ok as f64 / cols,
            variance_ok_fraction: var_ok as f64 / cols,
            max_abs_cross_correlation: max_corr,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored.iter().filter(|&&c| c).count() as f64 / self.n_paths as f64
    }
}

/// Per-step-column sanity of simulated increments.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentReport {
    /// Columns whose standardized mean is within `5/sqrt(n_paths)`.
    pub mean_ok_fraction: f64,
    /// Columns whose sample variance is within 20% of the step size.
    pub variance_ok_fraction: f64,
    pub max_abs_cross_correlation: f64,
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Simulates `n_paths` independent `d`-dimensional Brownian paths on `grid`.
///
/// Path `p` draws from the ChaCha8 stream `p` of the generator seeded with
/// `seed`, so its increments do not depend on how paths are scheduled.
pub fn simulate_brownian(grid: &TimeGrid, n_paths: usize, d: usize, seed: u64) -> Result<PathBundle> {
    if n_paths == 0 || d == 0 {
        return Err(config("n_paths and d must be at least 1"));
    }
    let n = grid.n_steps;
    let sq: Vec<f64> = grid.steps().iter().map(|h| h.sqrt()).collect();
    let mut inc = vec![0.0; n_paths * n * d];
    par::for_each_chunk_mut(&mut inc, n * d, |p, row| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        for i in 0..n {
            for k in 0..d {
                let x: f64 = StandardNormal.sample(&mut rng);
                row[i * d + k] = x * sq[i];
            }
        }
    });
    PathBundle::from_increments(grid.clone(), n_paths, d, seed, inc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::grid::Spacing;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::build(1.0, n, Spacing::Uniform).unwrap()
    }

    #[test]
    fn rerun_is_identical() {
        let g = grid(16);
        let a = simulate_brownian(&g, 2, 1, 42).unwrap();
        let b = simulate_brownian(&g, 2, 1, 42).unwrap();
        assert_eq!(a.increments, b.increments);
        let c = simulate_brownian(&g, 2, 1, 43).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn path_streams_do_not_depend_on_bundle_size() {
        let g = grid(8);
        let small = simulate_brownian(&g, 3, 2, 7).unwrap();
        let large = simulate_brownian(&g, 50, 2, 7).unwrap();
        assert_eq!(small.increments[..], large.increments[..small.increments.len()]);
    }

    #[test]
    fn moments_at_desk_scale() {
        let g = grid(100);
        let b = simulate_brownian(&g, 10_000, 2, 2024).unwrap();
        let m = b.increment_diagnostics();
        assert!(m.variance_ok_fraction >= 0.99, "{m:?}");
        assert!(m.mean_ok_fraction >= 0.99, "{m:?}");
        assert!(m.max_abs_cross_correlation < 5.0 / 100.0, "{m:?}");
    }

    #[test]
    fn positions_and_running_sup() {
        let g = grid(3);
        let b = PathBundle::from_increments(g, 1, 1, 0, vec![1.0, -3.0, 0.5]).unwrap();
        assert_eq!(b.b(0, 2), &[-2.0]);
        assert_eq!(b.abs_b(0, 3), 1.5);
        assert_eq!(b.sup_abs_b(0, 3), 2.0);
        assert_eq!(b.sup_abs_b(0, 1), 1.0);
    }

    #[test]
    fn aux_kinds() {
        let g = grid(4);
        let mut b = PathBundle::from_increments(g, 1, 1, 0, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let defs = vec![
            AuxDef::new("intb", AuxKind::RunningIntegral, Arc::new(|s: &NodeState| s.abs_b)),
            AuxDef::new("until", AuxKind::UntilLevel(1.0), Arc::new(|s: &NodeState| s.abs_b)),
            AuxDef::new("twice", AuxKind::Pointwise, Arc::new(|s: &NodeState| 2.0 * s.aux[0])),
        ];
        b.evaluate_aux(&defs).unwrap();
        let col = |a: usize| (0..5).map(|i| b.state(0, i).aux[a]).collect::<Vec<_>>();
        // |B| = 0, .5, 1, 1.5, 2 ; left rule with dt = .25
        assert_eq!(col(0), vec![0.0, 0.0, 0.125, 0.375, 0.75]);
        // |B| first reaches 1 at node 2: indicator is 1 up to and including node 2
        assert_eq!(col(1), vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(col(2), vec![0.0, 0.0, 0.25, 0.75, 1.5]);
    }

    #[test]
    fn fill_track_rejects_negative() {
        let g = grid(2);
        let mut b = PathBundle::from_increments(g, 2, 1, 0, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let f: PathFn = Arc::new(|s: &NodeState| if s.path == 1 && s.node == 2 { -1.0 } else { 1.0 });
        let err = b.fill_track("mu", &f).unwrap_err().to_string();
        assert!(err.contains("path 1") && err.contains("node 2") && err.contains("mu"), "{err}");
    }
}
