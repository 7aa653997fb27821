use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Exponent and integrability constants shared by weights, checkers and solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightParams {
    pub p: f64,
    pub beta: f64,
    pub rho: f64,
    /// Bound for `∫ν²` and the sub-linear side conditions.
    #[serde(rename = "M")]
    pub m: f64,
    /// Sub-linear exponent, only needed by the `L¹` theory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self { p: 2.0, beta: 1.0, rho: 2.0, m: 2.0, l: None }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(config(format!("p must be > 0, got {}", self.p)));
        }
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(config(format!("beta must be >= 1, got {}", self.beta)));
        }
        if !(self.rho.is_finite() && self.rho > 1.0) {
            return Err(config(format!("rho must be > 1, got {}", self.rho)));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(config(format!("M must be > 0, got {}", self.m)));
        }
        if let Some(l) = self.l {
            if !(l > 0.0 && l < 1.0) {
                return Err(config(format!("l must lie in (0,1), got {l}")));
            }
        }
        Ok(())
    }

    /// `(p - 1) ∧ 1`.
    pub fn min_pm1(&self) -> f64 {
        (self.p - 1.0).min(1.0)
    }

    /// `c(p) = p [(p-1) ∧ 1] / 2`.
    pub fn c_p(&self) -> f64 {
        self.p * self.min_pm1() / 2.0
    }

    /// Coefficient of `ν²` in the weight exponent; zero when `p <= 1`.
    pub fn nu_coefficient(&self) -> f64 {
        if self.p > 1.0 {
            self.rho / (2.0 * self.min_pm1())
        } else {
            0.0
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }
}
