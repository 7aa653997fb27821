//! Random sub-intervals on which the `ν²` budget is small.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::generators::{Process, WeightParams};
use crate::timepaths::PathBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdivisionPlan {
    pub n: usize,
    pub q: f64,
    /// `M^{q/2} / N`.
    pub threshold: f64,
    pub n_paths: usize,
    /// `[path][j]` for `j = 0..=N`, with `τ_0 = 0` and `τ_N = τ`.
    pub tau_js: Vec<usize>,
}

impl SubdivisionPlan {
    #[inline]
    pub fn tau_j(&self, p: usize, j: usize) -> usize {
        self.tau_js[p * (self.n + 1) + j]
    }

    pub fn check(&self, bundle: &PathBundle) -> Result<()> {
        if self.n_paths != bundle.n_paths || self.tau_js.len() != self.n_paths * (self.n + 1) {
            return Err(config("subdivision plan does not match the bundle"));
        }
        for p in 0..self.n_paths {
            if self.tau_j(p, 0) != 0 || self.tau_j(p, self.n) != bundle.tau[p] {
                return Err(config(format!("subdivision plan endpoints differ from [0, τ] on path {p}")));
            }
            if (1..=self.n).any(|j| self.tau_j(p, j) < self.tau_j(p, j - 1)) {
                return Err(config(format!("subdivision plan is not monotone on path {p}")));
            }
        }
        Ok(())
    }

    /// Largest `(∫_{τ_{j-1}}^{τ_j - Δ} ν²)^{q/2} − threshold` over paths and intervals,
    /// i.e. the budget excess once the crossing step is removed.
    pub fn max_excess(&self, bundle: &PathBundle) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for p in 0..self.n_paths {
            let cum = cumulative_nu2(bundle, p);
            for j in 1..=self.n {
                let (a, b) = (self.tau_j(p, j - 1), self.tau_j(p, j));
                let inner = if b > a { cum[b - 1] - cum[a] } else { 0.0 };
                worst = worst.max(inner.max(0.0).powf(self.q / 2.0) - self.threshold);
            }
        }
        worst
    }
}

/// Left-rule `∫_0^{t_i} ν²` at every node of path `p`; a missing `ν` reads as zero.
fn cumulative_nu2(bundle: &PathBundle, p: usize) -> Vec<f64> {
    let nu = Process::Nu.name();
    let mut c = vec![0.0; bundle.n_nodes()];
    for i in 0..bundle.n_steps() {
        c[i + 1] = c[i] + bundle.track_value(nu, p, i).powi(2) * bundle.grid.dt(i);
    }
    c
}

/// `τ_j` = first node with `(∫_0^t ν²)^{q/2} ≥ j M^{q/2} / N`, stopped at `τ`.
pub fn build_subdivision(bundle: &PathBundle, params: &WeightParams, n: usize, q: f64) -> Result<SubdivisionPlan> {
    if n == 0 {
        return Err(config("subdivision needs N >= 1"));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(config(format!("subdivision exponent q must exceed 1, got {q}")));
    }
    let threshold = params.m.powf(q / 2.0) / n as f64;
    let mut tau_js = vec![0; bundle.n_paths * (n + 1)];
    for (p, row) in tau_js.chunks_mut(n + 1).enumerate() {
        let tau = bundle.tau[p];
        let cum = cumulative_nu2(bundle, p);
        let mut i = 0;
        for (j, slot) in row.iter_mut().enumerate().take(n).skip(1) {
            let level = j as f64 * threshold * (1.0 - 1e-12);
            while i < tau && cum[i].powf(q / 2.0) < level {
                i += 1;
            }
            *slot = i;
        }
        row[n] = tau;
    }
    Ok(SubdivisionPlan { n, q, threshold, n_paths: bundle.n_paths, tau_js })
}

/// `exp` of the least-squares slope of `log h_n` over `n >= 2`, skipping zeros.
pub fn fitted_ratio(hist: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hist
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, h)| **h > 0.0 && h.is_finite())
        .map(|(n, h)| (n as f64, h.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
    Some((num / den).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::{simulate_brownian, TimeGrid};

    fn bundle_with_nu(nu: f64) -> PathBundle {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let mut b = simulate_brownian(&g, 3, 1, 2).unwrap();
        b.tracks.insert("nu".into(), vec![nu; 3 * 101]);
        b
    }

    #[test]
    fn zero_nu_puts_everything_in_the_first_interval() {
        let b = bundle_with_nu(0.0);
        let plan = build_subdivision(&b, &WeightParams::default(), 4, 2.0).unwrap();
        for p in 0..3 {
            assert_eq!(plan.tau_j(p, 0), 0);
            for j in 1..=4 {
                assert_eq!(plan.tau_j(p, j), 100);
            }
        }
    }

    #[test]
    fn uniform_budget_gives_quarters() {
        let b = bundle_with_nu(1.0);
        let params = WeightParams { m: 1.0, ..WeightParams::default() };
        let plan = build_subdivision(&b, &params, 4, 2.0).unwrap();
        assert_eq!(&plan.tau_js[..5], &[0, 25, 50, 75, 100]);
        assert!(plan.max_excess(&b) <= 1e-12);
        plan.check(&b).unwrap();
    }

    #[test]
    fn ratio_of_geometric_sequence() {
        let h: Vec<f64> = (0..6).map(|n| 3.0 * 0.5f64.powi(n)).collect();
        assert!((fitted_ratio(&h).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(fitted_ratio(&[1.0, 0.5]), None);
        assert_eq!(fitted_ratio(&[1.0, 0.5, 0.0, 0.0]), None);
    }
}
