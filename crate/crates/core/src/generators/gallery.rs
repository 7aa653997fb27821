use std::sync::Arc;

use serde::Serialize;

use super::params::WeightParams;
use super::spec::{Assumption, GeneratorSpec, GrowthBound, Process, SublinearForm, TerminalCtx, TerminalFn};
use crate::error::{config, Result};
use crate::timepaths::{norm, AuxDef, AuxKind, NodeState, PathFn, StoppingTimeSpec};

use Assumption::*;

/// A generator with its default horizon, stopping rule and terminal value.
#[derive(Clone)]
pub struct Preset {
    pub gen: GeneratorSpec,
    pub stopping: StoppingTimeSpec,
    pub t_max: f64,
    pub terminal: TerminalFn,
    pub terminal_desc: String,
    /// Value of `M` under which the pathwise side conditions hold on the
    /// default grid, when the preset needs one.
    pub suggested_m: Option<f64>,
    /// Solved in the `L¹` setting (weight `βμ`, `∫ν² <= M`).
    pub l1: bool,
}

/// Serializable summary of a preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: String,
    pub k: usize,
    pub d: usize,
    pub declared: Vec<String>,
    pub description: String,
    pub terminal: String,
    pub stopping: StoppingTimeSpec,
    pub t_max: f64,
    pub l1: bool,
}

impl Preset {
    pub fn info(&self) -> PresetInfo {
        PresetInfo {
            name: self.gen.name.clone(),
            k: self.gen.k,
            d: self.gen.d,
            declared: self.gen.declared.iter().map(|a| a.label().to_string()).collect(),
            description: self.gen.description.clone(),
            terminal: self.terminal_desc.clone(),
            stopping: self.stopping.clone(),
            t_max: self.t_max,
            l1: self.l1,
        }
    }
}

const NAMES: [&str; 9] = ["martingale", "drift", "decay", "ex3.9", "ex3.10", "ex3.11", "ex4.6", "ex4.7", "ex4.8"];

pub fn gallery_names() -> &'static [&'static str] {
    &NAMES
}

/// Every preset, built with `params`.
pub fn gallery(params: &WeightParams) -> Vec<PresetInfo> {
    NAMES
        .iter()
        .map(|n| preset(n, params).expect("gallery presets build").info())
        .collect()
}

fn pf(f: impl Fn(&NodeState) -> f64 + Send + Sync + 'static) -> PathFn {
    Arc::new(f)
}

fn term(f: impl Fn(&TerminalCtx, &mut [f64]) + Send + Sync + 'static) -> TerminalFn {
    Arc::new(f)
}

fn aux(name: &str, kind: AuxKind, f: impl Fn(&NodeState) -> f64 + Send + Sync + 'static) -> AuxDef {
    AuxDef::new(name, kind, pf(f))
}

fn first_b() -> TerminalFn {
    term(|c, out| out[0] = c.state.b[0])
}

fn full_horizon() -> StoppingTimeSpec {
    StoppingTimeSpec::deterministic(1.0)
}

/// Builds the named preset; coefficient choices that involve `β` or `M`
/// are taken from `params`.
pub fn preset(name: &str, params: &WeightParams) -> Result<Preset> {
    let beta = params.beta;
    let m = params.m;
    Ok(match name {
        "martingale" => Preset {
            gen: GeneratorSpec::new("martingale", 1, 1, false, Arc::new(|_, _, _, out| out[0] = 0.0))
                .with_constant(Process::Mu, 0.0)
                .with_constant(Process::Nu, 0.0)
                .with_constant(Process::Alpha, 1.0)
                .declaring(&[H1, H2, H3, H4, H5])
                .describe("g = 0"),
            stopping: full_horizon(),
            t_max: 1.0,
            terminal: first_b(),
            terminal_desc: "B_1".into(),
            suggested_m: None,
            l1: false,
        },
        "drift" => Preset {
            gen: GeneratorSpec::new("drift", 1, 1, false, Arc::new(|_, _, _, out| out[0] = 1.0))
                .with_constant(Process::Mu, 0.0)
                .with_constant(Process::Nu, 0.0)
                .with_constant(Process::Alpha, 1.0)
                .declaring(&[H1, H2, H3, H4, H5])
                .describe("g = 1"),
            stopping: full_horizon(),
            t_max: 1.0,
            terminal: term(|_, out| out[0] = 0.0),
            terminal_desc: "0".into(),
            suggested_m: None,
            l1: false,
        },
        "decay" => Preset {
            gen: GeneratorSpec::new("decay", 1, 1, false, Arc::new(|_, y, _, out| out[0] = -y[0]))
                .with_constant(Process::Mu, 0.0)
                .with_constant(Process::Nu, 0.0)
                .with_constant(Process::Alpha, 1.0)
                .declaring(&[H1, H2, H3, H4, H5])
                .describe("g = -y"),
            stopping: full_horizon(),
            t_max: 1.0,
            terminal: term(|_, out| out[0] = 1.0),
            terminal_desc: "1".into(),
            suggested_m: None,
            l1: false,
        },
        "ex3.9" => Preset {
            gen: GeneratorSpec::new(
                "ex3.9",
                1,
                1,
                true,
                Arc::new(|s, y, z, out| out[0] = (-s.abs_b.powi(6) * y[0]).exp() + norm(z).sin()),
            )
            .with_constant(Process::Mu, 0.0)
            .with_constant(Process::Nu, 1.0)
            .with_coefficient(Process::Alpha, pf(|s| 1.0 / (1.0 + s.sup_abs_b.powi(6))))
            .declaring(&[H1c, H2, H3c, H4, H5])
            .describe("g = exp(-|B|^6 y) + sin|z|, alpha = 1/(1 + sup|B|^6)"),
            stopping: full_horizon(),
            t_max: 1.0,
            terminal: first_b(),
            terminal_desc: "B_tau".into(),
            suggested_m: None,
            l1: false,
        },
        "ex3.10" => {
            let mut gen = GeneratorSpec::new(
                "ex3.10",
                2,
                2,
                true,
                Arc::new(|s, y, z, out| {
                    let b2 = s.abs_b * s.abs_b;
                    let b3 = b2 * s.abs_b;
                    let zn = norm(z);
                    out[0] = b2 * (-y[0].powi(3) + y[1]) + b3 * zn;
                    out[1] = b2 * (-y[1].powi(5) - y[0]) + b3 * zn.sin();
                }),
            )
            .with_coefficient(Process::Mu, pf(|s| s.abs_b.powi(2)))
            // each component carries a 1-Lipschitz function of |z|, so the
            // vector bound picks up a factor sqrt(2)
            .with_coefficient(Process::Nu, pf(|s| std::f64::consts::SQRT_2 * s.abs_b.powi(3)))
            .with_aux(aux("int_mu", AuxKind::RunningIntegral, |s| s.abs_b.powi(2)))
            .with_coefficient(Process::Alpha, pf(move |s| (-beta * s.aux[0]).exp()))
            .declaring(&[H1, H2, H3, H3b, H4, H5])
            .describe("g = |B|^2 (-y1^3 + y2, -y2^5 - y1) + |B|^3 (|z|, sin|z|)");
            gen.growth = Some(GrowthBound {
                mu_tilde: pf(|s| s.abs_b.powi(2)),
                phi: Arc::new(|x| std::f64::consts::SQRT_2 * (x.powi(5) + x.powi(3) + x)),
            });
            Preset {
                gen,
                stopping: full_horizon(),
                t_max: 1.0,
                terminal: term(|c, out| {
                    let w = (-c.cum_a).exp();
                    out[0] = w * c.state.b[0];
                    out[1] = w * c.state.b[1];
                }),
                terminal_desc: "exp(-int a) B_tau".into(),
                suggested_m: None,
                l1: false,
            }
        }
        "ex3.11" => {
            // sigma = 1/2, tau = first time |B| reaches 2
            let mut gen = GeneratorSpec::new(
                "ex3.11",
                1,
                1,
                true,
                Arc::new(|s, y, z, out| {
                    let ind = s.aux[0];
                    out[0] = s.abs_b.powi(4) * (1.0 - y[0].max(0.0).exp())
                        + s.abs_b * ind * y[0].abs()
                        + (s.abs_b * ind).sqrt() * norm(z).sin();
                }),
            )
            .with_aux(aux("until_sigma", AuxKind::UntilLevel(0.5), |s| s.t))
            .with_aux(aux("int_mu", AuxKind::RunningIntegral, |s| s.abs_b * s.aux[0]))
            .with_coefficient(Process::Mu, pf(|s| s.abs_b * s.aux[0]))
            .with_coefficient(Process::Nu, pf(|s| (s.abs_b * s.aux[0]).sqrt()))
            .with_coefficient(Process::Alpha, pf(move |s| (-beta * s.aux[1]).exp()))
            .declaring(&[H1, H2, H3b, H4, H5])
            .describe("g = |B|^4 (1 - exp(y+)) + |B| 1{t<=sigma} |y| + sqrt(|B| 1{t<=sigma}) sin|z|, sigma = 1/2");
            gen.growth = Some(GrowthBound {
                mu_tilde: pf(|s| (s.abs_b + 1.0).powi(4)),
                phi: Arc::new(|x| x.exp() + x + 1.0),
            });
            Preset {
                gen,
                stopping: StoppingTimeSpec::Hitting { level: 2.0, functional: "abs_b".into() },
                t_max: 2.0,
                terminal: first_b(),
                terminal_desc: "B_tau".into(),
                suggested_m: None,
                l1: false,
            }
        }
        "ex4.6" => {
            let mut gen = GeneratorSpec::new(
                "ex4.6",
                1,
                1,
                true,
                Arc::new(|s, y, z, out| {
                    let zn = norm(z);
                    out[0] = (-s.abs_b.powi(3) * y[0]).exp() + zn.min(zn.powf(2.0 / 3.0));
                }),
            )
            .with_constant(Process::Mu, 0.0)
            .with_constant(Process::Nu, 1.0)
            .with_constant(Process::Gamma, 1.0)
            .with_coefficient(Process::Alpha, pf(|s| 1.0 / (1.0 + s.sup_abs_b.powi(3))))
            .declaring(&[H1pp, H2, H3c, H4, H5, H6p])
            .describe("g = exp(-|B|^3 y) + min(|z|, |z|^(2/3))");
            gen.l = Some(2.0 / 3.0);
            Preset {
                gen,
                stopping: full_horizon(),
                t_max: 1.0,
                terminal: first_b(),
                terminal_desc: "B_tau".into(),
                suggested_m: Some(3.0),
                l1: true,
            }
        }
        "ex4.7" => {
            let mut gen = GeneratorSpec::new(
                "ex4.7",
                1,
                1,
                true,
                Arc::new(move |s, y, z, out| {
                    let b3 = s.abs_b.powi(3);
                    let zn = norm(z);
                    let gamma = (-beta * s.aux[0]).exp() * s.abs_b.powi(2);
                    out[0] = b3 * (1.0 - y[0].powi(3).exp()) + b3 * y[0].sin()
                        + ((-s.t).exp() * zn).min(gamma * zn.powf(1.0 / 3.0));
                }),
            )
            .with_aux(aux("int_mu", AuxKind::RunningIntegral, |s| s.abs_b.powi(3)))
            .with_aux(aux("int_b2", AuxKind::RunningIntegral, |s| s.abs_b.powi(2)))
            .with_coefficient(Process::Mu, pf(|s| s.abs_b.powi(3)))
            .with_coefficient(Process::Nu, pf(|s| (-s.t).exp()))
            .with_coefficient(Process::Gamma, pf(move |s| (-beta * s.aux[0]).exp() * s.abs_b.powi(2)))
            .declaring(&[H1p, H2, H3b, H4, H5, H6])
            .describe("g = |B|^3 (1 - exp(y^3)) + |B|^3 sin y + min(exp(-t)|z|, exp(-beta int|B|^3) |B|^2 |z|^(1/3))");
            gen.l = Some(1.0 / 3.0);
            gen.sublinear_form = SublinearForm::Simplified;
            gen.growth = Some(GrowthBound {
                mu_tilde: pf(|s| (s.abs_b + 1.0).powi(3)),
                phi: Arc::new(|x| x.powi(3).exp() + 2.0),
            });
            Preset {
                gen,
                stopping: full_horizon(),
                t_max: 1.0,
                terminal: term(move |c, out| out[0] = (-beta * c.state.aux[1]).exp() * c.state.abs_b),
                terminal_desc: "exp(-beta int_0^tau |B|^2) |B_tau|".into(),
                suggested_m: Some(16.0),
                l1: true,
            }
        }
        "ex4.8" => {
            // sigma = 1/2; sigma_bar from the running integral reaching M/2
            let mut gen = GeneratorSpec::new(
                "ex4.8",
                1,
                1,
                true,
                Arc::new(|s, y, z, out| {
                    let (ind_s, ind_sb) = (s.aux[0], s.aux[3]);
                    out[0] = -(s.abs_b.powi(4) * y[0]).exp()
                        + s.abs_b.powi(2) * ind_s * y[0].abs()
                        + s.abs_b * ind_sb * ((1.0 + norm(z)).sqrt() - 1.0)
                        + 1.0;
                }),
            )
            .with_aux(aux("until_sigma", AuxKind::UntilLevel(0.5), |s| s.t))
            .with_aux(aux("int_mu", AuxKind::RunningIntegral, |s| s.abs_b.powi(2) * s.aux[0]))
            .with_aux(aux("sigma_bar_integral", AuxKind::RunningIntegral, move |s| {
                (2.0 / 3.0 * beta * s.aux[1]).exp() * s.abs_b.powf(4.0 / 3.0) + s.abs_b.powi(2)
            }))
            .with_aux(aux("until_sigma_bar", AuxKind::UntilLevel(m / 2.0), |s| s.aux[2]))
            .with_coefficient(Process::Mu, pf(|s| s.abs_b.powi(2) * s.aux[0]))
            .with_coefficient(Process::Nu, pf(|s| s.abs_b * s.aux[3]))
            .with_coefficient(Process::Gamma, pf(|s| s.abs_b * s.aux[3]))
            .with_coefficient(Process::Alpha, pf(move |s| (-beta * s.aux[1]).exp() / (1.0 + s.sup_abs_b.powi(4))))
            .declaring(&[H1p, H2, H3, H4, H5, H6])
            .describe("g = -exp(|B|^4 y) + |B|^2 1{t<=sigma} |y| + |B| 1{t<=sigma_bar} (sqrt(1+|z|) - 1) + 1");
            gen.l = Some(0.5);
            gen.sublinear_form = SublinearForm::Simplified;
            Preset {
                gen,
                stopping: full_horizon(),
                t_max: 1.0,
                terminal: term(|c, out| out[0] = c.state.b[0].sin()),
                terminal_desc: "sin(B_tau)".into(),
                suggested_m: Some(2.0),
                l1: true,
            }
        }
        other => {
            return Err(config(format!(
                "unknown preset '{other}', expected one of {}",
                NAMES.join(", ")
            )))
        }
    })
}

/// Drivers that violate one hypothesis each, with the coefficients under
/// which they are checked.
pub fn counterexamples() -> Vec<(GeneratorSpec, Assumption)> {
    let y2 = GeneratorSpec::new("y^2", 1, 1, false, Arc::new(|_, y, _, out| out[0] = y[0] * y[0]))
        .with_constant(Process::Mu, 0.0);
    let z2 = GeneratorSpec::new("z^2", 1, 1, true, Arc::new(|_, _, z, out| out[0] = z[0] * z[0]))
        .with_constant(Process::Nu, 1.0);
    let mut lin = GeneratorSpec::new("z", 1, 1, true, Arc::new(|_, _, z, out| out[0] = z[0]))
        .with_constant(Process::Gamma, 1.0);
    lin.l = Some(0.5);
    vec![(y2, H4), (z2, H5), (lin, H6p)]
}

impl GeneratorSpec {
    pub fn describe(mut self, s: &str) -> Self {
        self.description = s.to_string();
        self
    }
}
