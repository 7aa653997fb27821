//! Simulated paths with coefficient tracks, `τ`, weights and terminal values,
//! ready for the solver.

use std::sync::Arc;

use crate::error::Result;
use crate::generators::{preset, terminal_values, GeneratorSpec, Preset, TerminalFn, WeightParams};
use crate::timepaths::{
    accumulate_weight, cap_tau_by_integral, evaluate_coefficients, realize_stopping_time, simulate_brownian, PathBundle,
    StoppingTimeSpec, TimeGrid, WeightTrack, WeightVariant,
};

pub struct Scenario {
    pub bundle: PathBundle,
    pub gen: GeneratorSpec,
    pub terminal: TerminalFn,
    /// `[path][k]`.
    pub xi: Vec<f64>,
    pub params: WeightParams,
    pub full: WeightTrack,
    pub beta_mu: WeightTrack,
    /// Paths whose `τ` was moved by the `∫ν² ≤ M` cap.
    pub capped: usize,
}

/// Inputs besides the generator.
#[derive(Clone)]
pub struct Setup {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub stopping: StoppingTimeSpec,
    pub params: WeightParams,
    /// Stop at the first node where `∫ν²` reaches `M`.
    pub cap_nu: bool,
}

impl Scenario {
    pub fn build(gen: GeneratorSpec, terminal: TerminalFn, setup: &Setup) -> Result<Self> {
        setup.params.validate()?;
        let bundle = simulate_brownian(&setup.grid, setup.n_paths, gen.d, setup.seed)?;
        Self::on_bundle(bundle, gen, terminal, setup)
    }

    /// Same as [`Scenario::build`] on a given bundle (its `τ` is recomputed).
    pub fn on_bundle(mut bundle: PathBundle, gen: GeneratorSpec, terminal: TerminalFn, setup: &Setup) -> Result<Self> {
        gen.validate(Some(&bundle))?;
        evaluate_coefficients(&mut bundle, &gen)?;
        realize_stopping_time(&mut bundle, &setup.stopping)?;
        let capped = if setup.cap_nu { cap_tau_by_integral(&mut bundle, setup.params.m, "nu^2")? } else { 0 };
        let full = accumulate_weight(&bundle, &setup.params, WeightVariant::FullA)?;
        let beta_mu = accumulate_weight(&bundle, &setup.params, WeightVariant::BetaMuOnly)?;
        let xi = terminal_values(&bundle, gen.k, &terminal, &full, &beta_mu);
        Ok(Self { bundle, gen, terminal, xi, params: setup.params, full, beta_mu, capped })
    }

    /// A gallery preset on a uniform grid over its default horizon.
    pub fn from_preset(name: &str, n_paths: usize, n_steps: usize, seed: u64, params: &WeightParams) -> Result<Self> {
        let p: Preset = preset(name, params)?;
        let setup = Setup {
            grid: TimeGrid::uniform(p.t_max, n_steps)?,
            n_paths,
            seed,
            stopping: p.stopping.clone(),
            params: *params,
            cap_nu: p.l1,
        };
        Self::build(p.gen, p.terminal, &setup)
    }

    /// `gen` on `[0, 1]` with `τ = 1` and `ξ = B_1` in every component.
    pub fn unit_horizon(gen: GeneratorSpec, n_paths: usize, n_steps: usize, seed: u64, params: &WeightParams) -> Result<Self> {
        let setup = Setup {
            grid: TimeGrid::uniform(1.0, n_steps)?,
            n_paths,
            seed,
            stopping: StoppingTimeSpec::deterministic(1.0),
            params: *params,
            cap_nu: false,
        };
        let terminal: TerminalFn = Arc::new(|c, out| out.fill(c.state.b[0]));
        Self::build(gen, terminal, &setup)
    }
}
