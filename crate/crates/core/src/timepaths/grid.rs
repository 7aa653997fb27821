use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Node placement rule for a [`TimeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Consecutive steps grow by `ratio`.
    Geometric { ratio: f64 },
}

/// Partition `0 = t_0 < ... < t_n = t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_steps: usize,
    pub spacing: Spacing,
    pub nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t_max: f64, n_steps: usize) -> Result<Self> {
        Self::build(t_max, n_steps, Spacing::Uniform)
    }

    pub fn build(t_max: f64, n_steps: usize, spacing: Spacing) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(config(format!("t_max must be positive and finite, got {t_max}")));
        }
        if n_steps == 0 {
            return Err(config("n_steps must be at least 1"));
        }
        let n = n_steps;
        let mut nodes = Vec::with_capacity(n + 1);
        match spacing {
            Spacing::Uniform => {
                nodes.extend((0..n).map(|i| t_max * i as f64 / n as f64));
            }
            Spacing::Geometric { ratio } => {
                if !(ratio.is_finite() && ratio > 0.0) {
                    return Err(config(format!("geometric ratio must be positive, got {ratio}")));
                }
                if (ratio - 1.0).abs() < 1e-12 {
                    nodes.extend((0..n).map(|i| t_max * i as f64 / n as f64));
                } else {
                    // t_i = t_max (r^i - 1) / (r^n - 1)
                    let denom = ratio.powi(n as i32) - 1.0;
                    if !denom.is_finite() {
                        return Err(config("geometric ratio overflows for this n_steps"));
                    }
                    nodes.extend((0..n).map(|i| t_max * (ratio.powi(i as i32) - 1.0) / denom));
                }
            }
        }
        nodes.push(t_max);
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config("grid nodes are not strictly increasing"));
        }
        Ok(Self { t_max, n_steps, spacing, nodes })
    }

    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn steps(&self) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.dt(i)).collect()
    }

    /// Largest node index with `t_i <= t` (with a relative slack of 1e-12).
    pub fn index_not_exceeding(&self, t: f64) -> usize {
        let slack = 1e-12 * self.t_max;
        self.nodes.iter().rposition(|&s| s <= t + slack).unwrap_or_default()
    }
}
