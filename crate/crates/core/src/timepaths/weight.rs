use serde::{Deserialize, Serialize};

use super::bundle::PathBundle;
use crate::error::{data, Result};
use crate::generators::WeightParams;
use crate::par;

/// Log-weights above this value mark a path as saturated.
pub const SATURATION_LOG: f64 = 700.0;

/// Which exponent integrand the weight is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// `β μ + ρ / (2 [(p-1) ∧ 1]) ν²` (the `ν²` term only for `p > 1`).
    FullA,
    /// `β μ`.
    BetaMuOnly,
    /// Identically zero exponent.
    Unit,
    /// Exponent supplied by the caller.
    Custom,
}

/// Exponent `a`, its left-rule running integral, and `exp` of it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrack {
    pub variant: WeightVariant,
    pub n_nodes: usize,
    /// `[path][node]`.
    pub a_values: Vec<f64>,
    /// `[path][node]`, `cum[0] = 0`.
    pub cum_integral: Vec<f64>,
    pub weight: Vec<f64>,
    /// Paths whose running integral exceeds [`SATURATION_LOG`] before `τ`.
    pub saturated: Vec<bool>,
}

impl WeightTrack {
    /// Builds the track from an exponent `a` given on `[path][node]`.
    ///
    /// Values beyond each path's `τ` are ignored and the integral is held
    /// constant there.
    pub fn from_exponent(bundle: &PathBundle, variant: WeightVariant, mut a: Vec<f64>) -> Result<Self> {
        let nn = bundle.n_nodes();
        assert_eq!(a.len(), bundle.n_paths * nn, "exponent has wrong shape");
        if let Some(pos) = a
            .iter()
            .enumerate()
            .position(|(j, v)| j % nn <= bundle.tau[j / nn] && !(v.is_finite() && *v >= 0.0))
        {
            return Err(data(format!(
                "weight exponent is {} on path {} at node {}",
                a[pos],
                pos / nn,
                pos % nn
            )));
        }
        let mut cum = vec![0.0; a.len()];
        par::for_each_chunk_pair_mut(&mut a, nn, &mut cum, nn, |p, ar, cr| {
            let tau = bundle.tau[p];
            ar[tau + 1..].fill(0.0);
            for i in 0..nn - 1 {
                cr[i + 1] = cr[i] + ar[i] * bundle.grid.dt(i);
            }
        });
        let weight = cum.iter().map(|c| c.exp()).collect();
        let saturated = cum.chunks(nn).map(|r| r[nn - 1] > SATURATION_LOG).collect();
        Ok(Self { variant, n_nodes: nn, a_values: a, cum_integral: cum, weight, saturated })
    }

    /// Weight identically one.
    pub fn unit(bundle: &PathBundle) -> Self {
        let len = bundle.n_paths * bundle.n_nodes();
        Self {
            variant: WeightVariant::Unit,
            n_nodes: bundle.n_nodes(),
            a_values: vec![0.0; len],
            cum_integral: vec![0.0; len],
            weight: vec![1.0; len],
            saturated: vec![false; bundle.n_paths],
        }
    }

    #[inline]
    pub fn cum(&self, path: usize, node: usize) -> f64 {
        self.cum_integral[path * self.n_nodes + node]
    }

    pub fn n_saturated(&self) -> usize {
        self.saturated.iter().filter(|&&s| s).count()
    }
}

/// Left-rule weight track of the chosen exponent on `bundle`.
pub fn accumulate_weight(bundle: &PathBundle, params: &WeightParams, variant: WeightVariant) -> Result<WeightTrack> {
    let nn = bundle.n_nodes();
    let len = bundle.n_paths * nn;
    let zeros = vec![0.0; len];
    let mu = bundle.track("mu").unwrap_or(&zeros);
    let nu = bundle.track("nu").unwrap_or(&zeros);
    let a: Vec<f64> = match variant {
        WeightVariant::Unit => return Ok(WeightTrack::unit(bundle)),
        WeightVariant::Custom => return Err(data("use WeightTrack::from_exponent for custom exponents")),
        WeightVariant::BetaMuOnly => mu.iter().map(|m| params.beta * m).collect(),
        WeightVariant::FullA => {
            let c = params.nu_coefficient();
            mu.iter().zip(nu).map(|(m, n)| params.beta * m + c * n * n).collect()
        }
    };
    WeightTrack::from_exponent(bundle, variant, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::bundle::{simulate_brownian, NodeState, PathFn};
    use crate::timepaths::grid::{Spacing, TimeGrid};
    use std::sync::Arc;

    fn bundle_with(mu: f64, nu: f64) -> PathBundle {
        let g = TimeGrid::build(1.0, 20, Spacing::Uniform).unwrap();
        let mut b = simulate_brownian(&g, 4, 1, 11).unwrap();
        let m: PathFn = Arc::new(move |_: &NodeState| mu);
        let n: PathFn = Arc::new(move |_: &NodeState| nu);
        b.fill_track("mu", &m).unwrap();
        b.fill_track("nu", &n).unwrap();
        b
    }

    fn params(p: f64) -> WeightParams {
        WeightParams { p, beta: 1.0, rho: 2.0, m: 1.0, l: None }
    }

    #[test]
    fn constant_exponent_one() {
        let b = bundle_with(0.0, 1.0);
        let w = accumulate_weight(&b, &params(2.0), WeightVariant::FullA).unwrap();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!((w.cum(0, i) - t).abs() < 1e-12);
            assert!((w.weight[i] - t.exp()).abs() < 1e-12);
        }
        assert_eq!(w.weight[0], 1.0);
    }

    #[test]
    fn three_halves_branch() {
        let b = bundle_with(0.0, 1.0);
        let w = accumulate_weight(&b, &params(1.5), WeightVariant::FullA).unwrap();
        assert!(w.a_values[..21].iter().all(|&a| (a - 2.0).abs() < 1e-15));
        assert!((w.weight[20] - 2.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn beta_mu_zero_is_unit() {
        let b = bundle_with(0.0, 3.0);
        let w = accumulate_weight(&b, &params(2.0), WeightVariant::BetaMuOnly).unwrap();
        assert!(w.weight.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn saturation_flag() {
        let b = bundle_with(1000.0, 0.0);
        let w = accumulate_weight(&b, &params(2.0), WeightVariant::BetaMuOnly).unwrap();
        assert_eq!(w.n_saturated(), 4);
    }
}
