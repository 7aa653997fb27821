//! Least-squares regression on path-state features, standing in for
//! `E[· | F_{t_i}]`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::par;
use crate::timepaths::PathBundle;

/// Condition estimates above this require a positive ridge.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    /// Total degree of the monomials in `B`.
    pub degree: usize,
    pub include_abs: bool,
    pub include_sup: bool,
    /// Ridge on the RMS-normalised Gram matrix; the intercept is not penalised.
    pub ridge: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { degree: 3, include_abs: true, include_sup: true, ridge: 1e-8 }
    }
}

impl BasisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(LabError::Config(format!("ridge must be finite and >= 0, got {}", self.ridge)));
        }
        if self.degree > 8 {
            return Err(LabError::Config(format!("basis degree {} is above the supported 8", self.degree)));
        }
        Ok(())
    }
}

/// Monomial exponents of total degree `1..=degree` in `d` variables, graded.
fn exponents(d: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 1..=degree as u32 {
        let mut cur = vec![0u32; d];
        fill(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut [u32], j: usize, left: u32) {
    if j + 1 == cur.len() {
        cur[j] = left;
        out.push(cur.to_vec());
        return;
    }
    for e in (0..=left).rev() {
        cur[j] = e;
        fill(out, cur, j + 1, left - e);
    }
}

/// Raw feature map shared by every node.
#[derive(Debug, Clone)]
pub struct Features {
    monomials: Vec<Vec<u32>>,
    include_abs: bool,
    include_sup: bool,
}

impl Features {
    pub fn new(cfg: &BasisConfig, d: usize) -> Self {
        Self { monomials: exponents(d, cfg.degree), include_abs: cfg.include_abs, include_sup: cfg.include_sup }
    }

    pub fn len(&self) -> usize {
        1 + self.monomials.len() + self.include_abs as usize + self.include_sup as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval(&self, bundle: &PathBundle, p: usize, i: usize, out: &mut [f64]) {
        let b = bundle.b(p, i);
        out[0] = 1.0;
        for (o, e) in out[1..].iter_mut().zip(&self.monomials) {
            *o = b.iter().zip(e).map(|(x, &k)| x.powi(k as i32)).product();
        }
        let mut j = 1 + self.monomials.len();
        if self.include_abs {
            out[j] = bundle.abs_b(p, i);
            j += 1;
        }
        if self.include_sup {
            out[j] = bundle.sup_abs_b(p, i);
        }
    }
}

/// Factorised normal equations at one node.
#[derive(Debug, Clone)]
pub struct NodeRegression {
    /// Paths with `i < τ_p`.
    pub active: Vec<usize>,
    /// Retained raw columns.
    keep: Vec<usize>,
    /// Scaled design rows `[active][kept]`.
    x: Vec<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    pub condition: f64,
}

/// Per-node regressions for one bundle and basis.
#[derive(Debug, Clone)]
pub struct RegressionCache {
    pub features: Features,
    pub nodes: Vec<NodeRegression>,
    pub ridge: f64,
}

impl RegressionCache {
    /// Builds the Gram factor at every node `i < n_steps`.
    pub fn build(bundle: &PathBundle, cfg: &BasisConfig) -> Result<Self> {
        cfg.validate()?;
        let features = Features::new(cfg, bundle.d);
        let m = features.len();
        let mut nodes = Vec::with_capacity(bundle.n_steps());
        let mut raw = Vec::new();
        for i in 0..bundle.n_steps() {
            let active: Vec<usize> = (0..bundle.n_paths).filter(|&p| i < bundle.tau[p]).collect();
            let n = active.len();
            if n == 0 {
                nodes.push(NodeRegression { active, keep: Vec::new(), x: Vec::new(), chol: None, condition: 1.0 });
                continue;
            }
            raw.resize(n * m, 0.0);
            par::for_each_chunk_mut(&mut raw, m, |j, row| features.eval(bundle, active[j], i, row));
            let sq = par::tree_sum_vec(n, m, |j, acc| {
                for (a, x) in acc.iter_mut().zip(&raw[j * m..(j + 1) * m]) {
                    *a += x * x;
                }
            });
            let rms: Vec<f64> = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
            let keep: Vec<usize> = (0..m).filter(|&c| c == 0 || rms[c] > 1e-12).collect();
            let inv_rms: Vec<f64> = keep.iter().map(|&c| if c == 0 { 1.0 } else { 1.0 / rms[c] }).collect();
            let mk = keep.len();
            let g = par::tree_sum_vec(n, mk * mk, |j, acc| {
                let row = &raw[j * m..(j + 1) * m];
                for a in 0..mk {
                    let xa = row[keep[a]] * inv_rms[a];
                    for b in 0..mk {
                        acc[a * mk + b] += xa * row[keep[b]] * inv_rms[b];
                    }
                }
            });
            let mut gram = DMatrix::from_row_slice(mk, mk, &g) / n as f64;
            for a in 1..mk {
                gram[(a, a)] += cfg.ridge;
            }
            let ev = SymmetricEigen::new(gram.clone()).eigenvalues;
            let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v.abs())));
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if cfg.ridge == 0.0 && condition > MAX_CONDITION {
                return Err(LabError::Numeric {
                    node: i,
                    message: format!("Gram matrix condition {condition:.3e} exceeds {MAX_CONDITION:e} with zero ridge"),
                });
            }
            let chol = gram.cholesky().ok_or_else(|| LabError::Numeric {
                node: i,
                message: "Gram matrix is not positive definite".into(),
            })?;
            let mut x = vec![0.0; n * mk];
            for (row, r) in x.chunks_mut(mk).zip(raw.chunks(m)) {
                for (a, o) in row.iter_mut().enumerate() {
                    *o = r[keep[a]] * inv_rms[a];
                }
            }
            nodes.push(NodeRegression { active, keep, x, chol: Some(chol), condition });
        }
        Ok(Self { features, nodes, ridge: cfg.ridge })
    }

    /// Scaled design matrix rows `[active][kept]` at node `i`.
    pub fn design(&self, i: usize) -> Design<'_> {
        let node = &self.nodes[i];
        Design { node: i, mk: node.keep.len(), x: &node.x }
    }

    /// Fits `t` targets given as `[active][t]` and returns fitted values in the
    /// same layout.
    pub fn fit(&self, design: &Design<'_>, targets: &[f64], t: usize) -> Result<Vec<f64>> {
        let node = &self.nodes[design.node];
        let n = node.active.len();
        let mk = design.mk;
        if n == 0 {
            return Ok(Vec::new());
        }
        if let Some(j) = targets.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Numeric {
                node: design.node,
                message: format!("non-finite regression target on path {}", node.active[j / t]),
            });
        }
        let rhs = par::tree_sum_vec(n, mk * t, |j, acc| {
            let row = &design.x[j * mk..(j + 1) * mk];
            let tg = &targets[j * t..(j + 1) * t];
            for a in 0..mk {
                for c in 0..t {
                    acc[a * t + c] += row[a] * tg[c];
                }
            }
        });
        let rhs = DMatrix::from_row_slice(mk, t, &rhs) / n as f64;
        let beta = node.chol.as_ref().expect("active node has a factor").solve(&rhs);
        let beta: Vec<f64> = (0..mk).flat_map(|a| (0..t).map(move |c| (a, c))).map(|(a, c)| beta[(a, c)]).collect();
        let mut fitted = vec![0.0; n * t];
        par::for_each_chunk_mut(&mut fitted, par::BLOCK * t, |bl, out| {
            for (jj, o) in out.chunks_mut(t).enumerate() {
                let j = bl * par::BLOCK + jj;
                let row = &design.x[j * mk..(j + 1) * mk];
                for (a, x) in row.iter().enumerate() {
                    for (c, v) in o.iter_mut().enumerate() {
                        *v += x * beta[a * t + c];
                    }
                }
            }
        });
        Ok(fitted)
    }
}

/// Scaled features of the active paths at one node.
pub struct Design<'a> {
    pub node: usize,
    mk: usize,
    x: &'a [f64],
}
