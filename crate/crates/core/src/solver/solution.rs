//! Discrete solutions, their diagnostics and the binary artifact.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::implicit::Fallbacks;
use super::SolverConfig;
use crate::error::{LabError, Result};
use crate::timepaths::{LeReader, LeWriter, PathBundle};

pub const SOLUTION_MAGIC: &[u8; 8] = b"BSDESOLN";
pub const SOLUTION_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub scheme: String,
    pub generator: String,
    pub config: SolverConfig,
    pub iterations: usize,
    /// Every outer iteration met its tolerance (always set for one-pass schemes).
    #[serde(default)]
    pub converged: bool,
    /// Successive-difference distances of the outer iteration.
    pub picard_history: Vec<f64>,
    /// Same distances in the `θ` norms, keyed by `θ`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub theta_histories: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interval_histories: Vec<Vec<f64>>,
    /// Fitted geometric ratio per sub-interval (`NaN` serialises as `null`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interval_ratios: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_ratio: Option<f64>,
    /// Truncation levels and distances between consecutive solutions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cauchy_history: Vec<f64>,
    /// RMS of `Y_{i+1} - Ŷ_i - Z_i ΔB_i` per node.
    pub node_residual_rms: Vec<f64>,
    pub fallbacks: Fallbacks,
}

/// `Y` on `[path][node][k]`, `Z` on `[path][step][k·d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub n_paths: usize,
    pub n_nodes: usize,
    pub k: usize,
    pub d: usize,
    pub tau: Vec<usize>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub meta: SolutionMeta,
}

impl DiscreteSolution {
    /// Zero `Z`, `Y = ξ` on `[τ, T]` and zero before.
    pub fn terminal(bundle: &PathBundle, xi: &[f64], k: usize, d: usize) -> Self {
        let nn = bundle.n_nodes();
        let ns = bundle.n_steps();
        let mut y = vec![0.0; bundle.n_paths * nn * k];
        for p in 0..bundle.n_paths {
            for i in bundle.tau[p]..nn {
                let at = (p * nn + i) * k;
                y[at..at + k].copy_from_slice(&xi[p * k..(p + 1) * k]);
            }
        }
        Self {
            n_paths: bundle.n_paths,
            n_nodes: nn,
            k,
            d,
            tau: bundle.tau.clone(),
            y,
            z: vec![0.0; bundle.n_paths * ns * k * d],
            meta: SolutionMeta::default(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_nodes - 1
    }

    #[inline]
    pub fn y_at(&self, p: usize, i: usize) -> &[f64] {
        let at = (p * self.n_nodes + i) * self.k;
        &self.y[at..at + self.k]
    }

    #[inline]
    pub fn z_at(&self, p: usize, i: usize) -> &[f64] {
        let kd = self.k * self.d;
        let at = (p * self.n_steps() + i) * kd;
        &self.z[at..at + kd]
    }

    /// Path-average of `Y_0`.
    pub fn y0(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for p in 0..self.n_paths {
            for (a, v) in m.iter_mut().zip(self.y_at(p, 0)) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.n_paths.max(1) as f64);
        m
    }

    pub fn check_aligned(&self, bundle: &PathBundle) -> Result<()> {
        if self.n_paths != bundle.n_paths || self.n_nodes != bundle.n_nodes() || self.tau != bundle.tau {
            return Err(LabError::Data("solution and bundle are not aligned".into()));
        }
        Ok(())
    }

    /// Differences `self − other` as a new `(Y, Z)` pair.
    pub fn difference(&self, other: &DiscreteSolution) -> (Vec<f64>, Vec<f64>) {
        let dy = self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect();
        let dz = self.z.iter().zip(&other.z).map(|(a, b)| a - b).collect();
        (dy, dz)
    }
}

/// Writes the `Y` and `Z` arrays. Metadata goes to a JSON sidecar.
pub fn write_solution<W: Write>(sol: &DiscreteSolution, out: W) -> Result<()> {
    let mut w = LeWriter(out);
    w.bytes(SOLUTION_MAGIC)?;
    w.u32(SOLUTION_VERSION)?;
    for v in [sol.n_paths, sol.n_nodes, sol.k, sol.d] {
        w.u64(v as u64)?;
    }
    for &t in &sol.tau {
        w.u64(t as u64)?;
    }
    w.f64s(&sol.y)?;
    w.f64s(&sol.z)?;
    Ok(())
}

pub fn read_solution<R: Read>(input: R, meta: SolutionMeta) -> Result<DiscreteSolution> {
    let mut r = LeReader(input);
    if &r.exact::<8>()? != SOLUTION_MAGIC {
        return Err(LabError::Format("not a solution artifact (bad magic)".into()));
    }
    let v = r.u32()?;
    if v != SOLUTION_VERSION {
        return Err(LabError::Format(format!("unsupported solution version {v}")));
    }
    let (n_paths, n_nodes, k, d) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    if n_nodes < 2 || k == 0 || d == 0 {
        return Err(LabError::Format("solution header has empty dimensions".into()));
    }
    let tau = (0..n_paths).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let y = r.f64s(n_paths * n_nodes * k)?;
    let z = r.f64s(n_paths * (n_nodes - 1) * k * d)?;
    Ok(DiscreteSolution { n_paths, n_nodes, k, d, tau, y, z, meta })
}

/// One-step residuals of the discrete equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Over `(path, i < τ)` of `|Y_i − Y_{i+1} − g Δ_i + Z_i ΔB_i|`.
    pub mean_abs: f64,
    pub max_abs: f64,
    pub argmax_path: usize,
    pub argmax_node: usize,
    pub per_node_mean_abs: Vec<f64>,
    /// `max |Y_τ − ξ|`.
    pub terminal_mismatch: f64,
    /// RMS residual of regressing `Y_i` on the state at node `i`.
    pub measurability_rms: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::{simulate_brownian, TimeGrid};

    #[test]
    fn artifact_round_trip() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let mut b = simulate_brownian(&g, 4, 2, 1).unwrap();
        b.tau = vec![3, 1, 2, 0];
        let xi: Vec<f64> = (0..4).map(|p| p as f64 + 0.25).collect();
        let mut s = DiscreteSolution::terminal(&b, &xi, 1, 2);
        s.z.iter_mut().enumerate().for_each(|(j, v)| *v = (j as f64).sin());
        assert_eq!(s.y_at(1, 2), &[1.25]);
        assert_eq!(s.y_at(1, 0), &[0.0]);
        let mut buf = Vec::new();
        write_solution(&s, &mut buf).unwrap();
        let back = read_solution(&buf[..], s.meta.clone()).unwrap();
        assert_eq!(back, s);
        assert!(read_solution(&buf[..20], SolutionMeta::default()).is_err());
        assert!(read_solution(&b"BSDEPATH\x01\0\0\0"[..], SolutionMeta::default()).is_err());
    }
}
