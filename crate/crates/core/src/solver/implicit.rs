//! Implicit-in-`y` Euler step `y = ŷ + Δ g(t, y, z)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::generators::GeneratorSpec;
use crate::timepaths::{norm, NodeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplicitConfig {
    pub max_iter: usize,
    /// Relative tolerance on `|T(y) - y|`.
    pub tol: f64,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-13 }
    }
}

/// How a step was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    FixedPoint,
    Newton,
    Bisection,
}

/// Counts of steps resolved by each method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fallbacks {
    pub fixed_point: usize,
    pub newton: usize,
    pub bisection: usize,
}

impl Fallbacks {
    pub fn add(&mut self, m: StepMethod) {
        match m {
            StepMethod::FixedPoint => self.fixed_point += 1,
            StepMethod::Newton => self.newton += 1,
            StepMethod::Bisection => self.bisection += 1,
        }
    }

    pub fn merge(&mut self, o: &Fallbacks) {
        self.fixed_point += o.fixed_point;
        self.newton += o.newton;
        self.bisection += o.bisection;
    }
}

struct Step<'a> {
    gen: &'a GeneratorSpec,
    st: &'a NodeState<'a>,
    yhat: &'a [f64],
    z: &'a [f64],
    dt: f64,
}

impl Step<'_> {
    /// `T(y) = ŷ + Δ g(y)`.
    fn map(&self, y: &[f64], out: &mut [f64]) {
        self.gen.eval(self.st, y, self.z, out);
        for (o, h) in out.iter_mut().zip(self.yhat) {
            *o = h + self.dt * *o;
        }
    }

    fn residual(&self, y: &[f64], buf: &mut [f64]) -> f64 {
        self.map(y, buf);
        buf.iter().zip(y).map(|(t, v)| (t - v) * (t - v)).sum::<f64>().sqrt()
    }

    fn ok(&self, r: f64, y: &[f64], tol: f64) -> bool {
        r <= tol * (1.0 + norm(y))
    }
}

pub fn solve_step(
    gen: &GeneratorSpec,
    st: &NodeState,
    yhat: &[f64],
    z: &[f64],
    dt: f64,
    cfg: &ImplicitConfig,
) -> Option<(Vec<f64>, StepMethod)> {
    let s = Step { gen, st, yhat, z, dt };
    if let Some(y) = fixed_point(&s, cfg) {
        return Some((y, StepMethod::FixedPoint));
    }
    if let Some(y) = newton(&s, cfg) {
        return Some((y, StepMethod::Newton));
    }
    if yhat.len() == 1 {
        if let Some(y) = bisection(&s, cfg) {
            return Some((vec![y], StepMethod::Bisection));
        }
    }
    None
}

fn fixed_point(s: &Step, cfg: &ImplicitConfig) -> Option<Vec<f64>> {
    let k = s.yhat.len();
    let mut y = s.yhat.to_vec();
    let mut ty = vec![0.0; k];
    s.map(&y, &mut ty);
    let mut r = ty.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if !r.is_finite() {
        return None;
    }
    if s.ok(r, &y, cfg.tol) {
        return Some(y);
    }
    let mut omega = 1.0;
    let mut cand = vec![0.0; k];
    let mut tc = vec![0.0; k];
    for _ in 0..cfg.max_iter {
        for j in 0..k {
            cand[j] = y[j] + omega * (ty[j] - y[j]);
        }
        let rc = s.residual(&cand, &mut tc);
        if !(rc.is_finite() && rc < r) {
            omega *= 0.5;
            continue;
        }
        std::mem::swap(&mut y, &mut cand);
        std::mem::swap(&mut ty, &mut tc);
        r = rc;
        if s.ok(r, &y, cfg.tol) {
            return Some(y);
        }
    }
    None
}

fn newton(s: &Step, cfg: &ImplicitConfig) -> Option<Vec<f64>> {
    let k = s.yhat.len();
    let f = |y: &[f64], buf: &mut [f64]| -> DVector<f64> {
        s.map(y, buf);
        DVector::from_iterator(k, y.iter().zip(buf.iter()).map(|(v, t)| v - t))
    };
    let mut buf = vec![0.0; k];
    let mut y = s.yhat.to_vec();
    let mut fy = f(&y, &mut buf);
    for _ in 0..cfg.max_iter {
        let r = fy.norm();
        if !r.is_finite() {
            return None;
        }
        if s.ok(r, &y, cfg.tol) {
            return Some(y);
        }
        let mut jac = DMatrix::zeros(k, k);
        for c in 0..k {
            let h = 1e-7 * (1.0 + y[c].abs());
            let mut yp = y.clone();
            yp[c] += h;
            let fp = f(&yp, &mut buf);
            jac.set_column(c, &((fp - &fy) / h));
        }
        let step = jac.lu().solve(&fy)?;
        let mut lambda = 1.0;
        loop {
            let cand: Vec<f64> = y.iter().zip(step.iter()).map(|(v, d)| v - lambda * d).collect();
            let fc = f(&cand, &mut buf);
            if fc.norm().is_finite() && fc.norm() < r {
                y = cand;
                fy = fc;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return None;
            }
        }
    }
    None
}

/// Bracketed bisection on `F(y) = y - ŷ - Δ g(y)` for `k = 1`.
fn bisection(s: &Step, cfg: &ImplicitConfig) -> Option<f64> {
    let mut buf = [0.0];
    let mut f = |y: f64| -> f64 {
        s.map(&[y], &mut buf);
        y - buf[0]
    };
    let y0 = s.yhat[0];
    let f0 = f(y0);
    if f0 == 0.0 {
        return Some(y0);
    }
    if f0.is_nan() {
        return None;
    }
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let mut h = 1.0 + y0.abs();
    let mut other = None;
    for _ in 0..1100 {
        let y = y0 + dir * h;
        let fy = f(y);
        if fy.is_nan() || !y.is_finite() {
            return None;
        }
        if fy.signum() != f0.signum() || fy == 0.0 {
            other = Some(y);
            break;
        }
        h *= 2.0;
    }
    let other = other?;
    let (mut lo, mut hi) = if dir > 0.0 { (y0, other) } else { (other, y0) };
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.is_nan() {
            return None;
        }
        if fm == 0.0 || (hi - lo) <= cfg.tol * (1.0 + mid.abs()) {
            return Some(mid);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
