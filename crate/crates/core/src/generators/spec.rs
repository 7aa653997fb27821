use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::timepaths::{AuxDef, NodeState, PathBundle, PathFn, WeightTrack};

/// `g(t, ω, y, z)`; `z` is the row-major flattened `k × d` matrix and the
/// result is written to `out` (length `k`).
pub type Driver = Arc<dyn Fn(&NodeState, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Terminal value `ξ` as a function of the state at `τ`.
pub type TerminalFn = Arc<dyn Fn(&TerminalCtx, &mut [f64]) + Send + Sync>;

/// State handed to a [`TerminalFn`].
pub struct TerminalCtx<'a> {
    pub state: NodeState<'a>,
    /// `∫_0^τ a` for the full exponent.
    pub cum_a: f64,
    /// `β ∫_0^τ μ`.
    pub cum_beta_mu: f64,
}

/// Structural coefficient processes; each is stored as a bundle track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    Mu,
    Nu,
    Gamma,
    G1,
    G2,
    Alpha,
}

impl Process {
    pub const ALL: [Process; 6] = [Process::Mu, Process::Nu, Process::Gamma, Process::G1, Process::G2, Process::Alpha];

    pub fn name(self) -> &'static str {
        match self {
            Process::Mu => "mu",
            Process::Nu => "nu",
            Process::Gamma => "gamma",
            Process::G1 => "g1",
            Process::G2 => "g2",
            Process::Alpha => "alpha",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Hypotheses a generator may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assumption {
    H1,
    #[serde(rename = "H1'")]
    H1p,
    #[serde(rename = "H1''")]
    H1pp,
    H1c,
    H2,
    H3,
    H3b,
    H3c,
    H4,
    H5,
    H6,
    #[serde(rename = "H6'")]
    H6p,
}

impl Assumption {
    pub const ALL: [Assumption; 12] = [
        Assumption::H1,
        Assumption::H1p,
        Assumption::H1pp,
        Assumption::H1c,
        Assumption::H2,
        Assumption::H3,
        Assumption::H3b,
        Assumption::H3c,
        Assumption::H4,
        Assumption::H5,
        Assumption::H6,
        Assumption::H6p,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Assumption::H1 => "H1",
            Assumption::H1p => "H1'",
            Assumption::H1pp => "H1''",
            Assumption::H1c => "H1c",
            Assumption::H2 => "H2",
            Assumption::H3 => "H3",
            Assumption::H3b => "H3b",
            Assumption::H3c => "H3c",
            Assumption::H4 => "H4",
            Assumption::H5 => "H5",
            Assumption::H6 => "H6",
            Assumption::H6p => "H6'",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label() == s)
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which right-hand side the sub-linear growth check uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SublinearForm {
    /// `γ (g¹ + g² + |y| + |z|)^l` with both integral side conditions.
    #[default]
    Full,
    /// `γ |z|^l` with the `2/(2-l)` integral bound only.
    Simplified,
}

/// `|g(t,y,0) - g(t,0,0)| <= μ̃_t φ(|y|)`.
#[derive(Clone)]
pub struct GrowthBound {
    pub mu_tilde: PathFn,
    pub phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// A driver together with its structural data and declared hypotheses.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub name: String,
    pub k: usize,
    pub d: usize,
    pub driver: Driver,
    /// `false` lets solvers skip the Picard loop.
    pub z_dependent: bool,
    /// Path functionals needed by the driver or its coefficients.
    pub aux: Vec<AuxDef>,
    pub coefficients: Vec<(Process, PathFn)>,
    pub declared: Vec<Assumption>,
    pub l: Option<f64>,
    pub sublinear_form: SublinearForm,
    pub growth: Option<GrowthBound>,
    pub description: String,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("d", &self.d)
            .field("z_dependent", &self.z_dependent)
            .field("aux", &self.aux)
            .field("coefficients", &self.coefficients.iter().map(|c| c.0).collect::<Vec<_>>())
            .field("declared", &self.declared)
            .field("l", &self.l)
            .finish_non_exhaustive()
    }
}

impl GeneratorSpec {
    /// Bare generator with no coefficients or declarations.
    pub fn new(name: impl Into<String>, k: usize, d: usize, z_dependent: bool, driver: Driver) -> Self {
        Self {
            name: name.into(),
            k,
            d,
            driver,
            z_dependent,
            aux: Vec::new(),
            coefficients: Vec::new(),
            declared: Vec::new(),
            l: None,
            sublinear_form: SublinearForm::Full,
            growth: None,
            description: String::new(),
        }
    }

    pub fn with_coefficient(mut self, p: Process, f: PathFn) -> Self {
        self.coefficients.retain(|c| c.0 != p);
        self.coefficients.push((p, f));
        self
    }

    pub fn with_constant(self, p: Process, v: f64) -> Self {
        self.with_coefficient(p, Arc::new(move |_: &NodeState| v))
    }

    pub fn with_aux(mut self, a: AuxDef) -> Self {
        self.aux.push(a);
        self
    }

    pub fn declaring(mut self, a: &[Assumption]) -> Self {
        self.declared = a.to_vec();
        self
    }

    pub fn has_coefficient(&self, p: Process) -> bool {
        self.coefficients.iter().any(|c| c.0 == p)
    }

    #[inline]
    pub fn eval(&self, st: &NodeState, y: &[f64], z: &[f64], out: &mut [f64]) {
        (self.driver)(st, y, z, out)
    }

    pub fn eval_vec(&self, st: &NodeState, y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.eval(st, y, z, &mut out);
        out
    }

    /// `g(t, 0, 0)`.
    pub fn at_origin(&self, st: &NodeState) -> Vec<f64> {
        self.eval_vec(st, &vec![0.0; self.k], &vec![0.0; self.k * self.d])
    }

    /// Checks dimensions against a bundle and declared-data consistency.
    pub fn validate(&self, bundle: Option<&PathBundle>) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(config("generator dimensions k and d must be at least 1"));
        }
        if let Some(b) = bundle {
            if b.d != self.d {
                return Err(config(format!(
                    "generator '{}' expects d = {}, bundle has d = {}",
                    self.name, self.d, b.d
                )));
            }
        }
        let needs_l = self.declared.iter().any(|a| matches!(a, Assumption::H6 | Assumption::H6p));
        if needs_l {
            match self.l {
                Some(l) if l > 0.0 && l < 1.0 => {}
                _ => return Err(config(format!("generator '{}' declares H6 without l in (0,1)", self.name))),
            }
        }
        let needs_alpha = self.declared.iter().any(|a| matches!(a, Assumption::H3 | Assumption::H3c));
        if needs_alpha && !self.has_coefficient(Process::Alpha) {
            return Err(config(format!("generator '{}' declares H3 without an alpha process", self.name)));
        }
        Ok(())
    }
}

/// Terminal values `[path][k]` evaluated at each path's `τ`.
pub fn terminal_values(bundle: &PathBundle, k: usize, xi: &TerminalFn, full: &WeightTrack, beta_mu: &WeightTrack) -> Vec<f64> {
    let mut out = vec![0.0; bundle.n_paths * k];
    crate::par::for_each_chunk_mut(&mut out, k, |p, row| {
        let t = bundle.tau[p];
        let ctx = TerminalCtx { state: bundle.state(p, t), cum_a: full.cum(p, t), cum_beta_mu: beta_mu.cum(p, t) };
        xi(&ctx, row);
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Assumption::ALL {
            assert_eq!(Assumption::parse(a.label()), Some(a));
            let j = serde_json::to_string(&a).unwrap();
            assert_eq!(j, format!("\"{}\"", a.label()));
        }
        for p in Process::ALL {
            assert_eq!(Process::parse(p.name()), Some(p));
        }
    }

    #[test]
    fn validate_requires_l_and_alpha() {
        let g = GeneratorSpec::new("x", 1, 1, false, Arc::new(|_: &NodeState, _: &[f64], _: &[f64], o: &mut [f64]| o[0] = 0.0));
        assert!(g.clone().declaring(&[Assumption::H6]).validate(None).is_err());
        assert!(g.clone().declaring(&[Assumption::H3]).validate(None).is_err());
        let ok = g.declaring(&[Assumption::H3]).with_constant(Process::Alpha, 1.0);
        assert!(ok.validate(None).is_ok());
    }
}
