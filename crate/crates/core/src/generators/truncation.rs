use std::sync::Arc;

use super::spec::GeneratorSpec;
use crate::timepaths::{norm, NodeState, PathBundle, WeightTrack};

/// Radial clamp `q_r(x) = x r / (|x| ∨ r)`.
pub fn truncate(x: &[f64], r: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    truncate_in_place(&mut out, r);
    out
}

pub fn truncate_in_place(x: &mut [f64], r: f64) {
    let n = norm(x);
    if n <= r {
        return;
    }
    if n == 0.0 || r <= 0.0 {
        x.fill(0.0);
        return;
    }
    let s = r / n;
    x.iter_mut().for_each(|v| *v *= s);
}

/// Truncated terminal values and driver of rank `n`.
///
/// With `α̃_t = exp(-∫_0^t a)` taken from `full`:
/// `ξ_n = q_{n α̃_τ}(ξ)` and
/// `g_n = g - g(·,0,0) + q_{n e^{-t} α̃_t}(g(·,0,0))`.
pub fn truncated_data(gen: &GeneratorSpec, bundle: &PathBundle, xi: &[f64], n: f64, full: &WeightTrack) -> (Vec<f64>, GeneratorSpec) {
    let k = gen.k;
    let mut xi_n = xi.to_vec();
    for (p, row) in xi_n.chunks_mut(k).enumerate() {
        let t = bundle.tau[p];
        truncate_in_place(row, n * (-full.cum(p, t)).exp());
    }
    // g(·,0,0) and its truncation, tabulated per (path, node).
    let nn = bundle.n_nodes();
    let mut shift = vec![0.0; bundle.n_paths * nn * k];
    let (y0, z0) = (vec![0.0; k], vec![0.0; k * gen.d]);
    crate::par::for_each_chunk_mut(&mut shift, nn * k, |p, row| {
        for i in 0..nn {
            let st = bundle.state(p, i);
            let out = &mut row[i * k..(i + 1) * k];
            gen.eval(&st, &y0, &z0, out);
            let mut q = out.to_vec();
            truncate_in_place(&mut q, n * (-st.t).exp() * (-full.cum(p, i)).exp());
            for (o, qv) in out.iter_mut().zip(q) {
                *o = qv - *o;
            }
        }
    });
    let shift = Arc::new(shift);
    let inner = gen.driver.clone();
    let driver = Arc::new(move |st: &NodeState, y: &[f64], z: &[f64], out: &mut [f64]| {
        inner(st, y, z, out);
        let at = (st.path * nn + st.node) * k;
        for (o, s) in out.iter_mut().zip(&shift[at..at + k]) {
            *o += s;
        }
    });
    let mut g = gen.clone();
    g.driver = driver;
    g.name = format!("{}[n={n}]", gen.name);
    (xi_n, g)
}

/// `α̂_t = α_t ∧ exp(-β ∫_0^t μ - t)` with the left-rule integral.
pub fn modified_alpha(bundle: &PathBundle, alpha: &[f64], mu: &[f64], beta: f64) -> Vec<f64> {
    let nn = bundle.n_nodes();
    let mut out = vec![0.0; alpha.len()];
    for p in 0..bundle.n_paths {
        let mut cum = 0.0;
        for i in 0..nn {
            let j = p * nn + i;
            out[j] = alpha[j].min((-beta * cum - bundle.grid.nodes[i]).exp());
            if i + 1 < nn {
                cum += mu[j] * bundle.grid.dt(i);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        assert_eq!(truncate(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        let t = truncate(&[3.0, 4.0], 1.0);
        assert!((t[0] - 0.6).abs() < 1e-15 && (t[1] - 0.8).abs() < 1e-15);
        assert_eq!(truncate(&[0.0, 0.0], 2.0), vec![0.0, 0.0]);
        assert_eq!(truncate(&[0.0], 0.0), vec![0.0]);
        assert_eq!(truncate(&[2.0, -1.0], 0.0), vec![0.0, 0.0]);
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..4)
    }

    proptest! {
        #[test]
        fn norm_is_min(x in vec3(), r in 0.0f64..2e3) {
            let n = norm(&truncate(&x, r));
            let want = norm(&x).min(r);
            prop_assert!((n - want).abs() <= 1e-12 * (1.0 + want));
        }

        #[test]
        fn idempotent(x in vec3(), r in 0.0f64..2e3) {
            let once = truncate(&x, r);
            let twice = truncate(&once, r);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn one_lipschitz(x in vec3(), dy in vec3(), r in 0.0f64..2e3) {
            let y: Vec<f64> = x.iter().zip(dy.iter().cycle()).map(|(a, b)| a + b).collect();
            let d_in = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            let qx = truncate(&x, r);
            let qy = truncate(&y, r);
            let d_out = norm(&qx.iter().zip(&qy).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(d_out <= d_in + 1e-12 * (1.0 + d_in));
        }

        #[test]
        fn direction_kept(x in vec3(), r in 1e-3f64..2e3) {
            let q = truncate(&x, r);
            let nx = norm(&x);
            if nx > 0.0 {
                let nq = norm(&q);
                for (a, b) in x.iter().zip(&q) {
                    prop_assert!((a / nx - b / nq).abs() < 1e-12);
                }
            }
        }
    }
}
