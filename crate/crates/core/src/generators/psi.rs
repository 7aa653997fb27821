use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::checks::{mc_estimate, Estimate};
use super::spec::GeneratorSpec;
use crate::par;
use crate::timepaths::{norm, PathBundle, WeightTrack};

/// Radial ladder levels `J`.
pub const DEFAULT_LADDER: usize = 8;
/// Paths used by the growth estimate.
pub const PSI_MAX_PATHS: usize = 2000;

pub fn default_sphere(k: usize) -> usize {
    if k == 1 {
        2
    } else {
        64
    }
}

/// Van der Corput radical inverse in base 2.
fn van_der_corput(mut i: u64) -> f64 {
    let mut x = 0.0;
    let mut f = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            x += f;
        }
        i >>= 1;
        f *= 0.5;
    }
    x
}

/// `n` unit directions in `R^k`; the first `m` are the same for any `n >= m`.
pub fn sphere_directions(k: usize, n: usize) -> Vec<Vec<f64>> {
    match k {
        1 => [vec![1.0], vec![-1.0]].into_iter().take(n.clamp(1, 2)).collect(),
        2 => (0..n as u64)
            .map(|i| {
                let th = std::f64::consts::TAU * van_der_corput(i);
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1ec);
                rng.set_stream(i as u64);
                let mut v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                let nv = norm(&v).max(f64::MIN_POSITIVE);
                v.iter_mut().for_each(|x| *x /= nv);
                v
            })
            .collect(),
    }
}

/// Lower estimate of `ψ_r^α(t) = sup_{|y| <= r α_t} |g(t,y,0) - g(t,0,0)|`.
#[derive(Debug, Clone)]
pub struct PsiResult {
    /// `[path][node]` for the first `n_paths_used` paths; zero beyond `τ`.
    pub track: Vec<f64>,
    pub n_paths_used: usize,
    /// `E[∫_0^τ w ψ dt]` over the used paths.
    pub estimate: Estimate,
}

/// Maximizes over `n_sphere` directions times the ladder `{r α_t j / J}`.
pub fn psi_growth(gen: &GeneratorSpec, bundle: &PathBundle, r: f64, alpha: &[f64], n_sphere: usize, ladder: usize, weight: &WeightTrack) -> PsiResult {
    let np = bundle.n_paths.min(PSI_MAX_PATHS);
    let nn = bundle.n_nodes();
    let dirs = sphere_directions(gen.k, n_sphere.max(1));
    let kd = gen.k * gen.d;
    let mut track = vec![0.0; np * nn];
    par::for_each_chunk_mut(&mut track, nn, |p, row| {
        let z0 = vec![0.0; kd];
        let mut y = vec![0.0; gen.k];
        let mut gy = vec![0.0; gen.k];
        for (i, out) in row.iter_mut().enumerate().take(bundle.tau[p] + 1) {
            let st = bundle.state(p, i);
            let g0 = gen.at_origin(&st);
            let rad = r * alpha[p * nn + i];
            let mut best = 0.0f64;
            for dir in &dirs {
                for j in 1..=ladder {
                    let s = rad * j as f64 / ladder as f64;
                    y.iter_mut().zip(dir).for_each(|(yv, dv)| *yv = s * dv);
                    gen.eval(&st, &y, &z0, &mut gy);
                    let v = gy.iter().zip(&g0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    // NaN never wins `max`; infinities do
                    best = best.max(v);
                }
            }
            *out = best;
        }
    });
    let skip: Vec<bool> = weight.saturated[..np].to_vec();
    let estimate = mc_estimate(np, &skip, |p| {
        (0..bundle.tau[p])
            .map(|i| weight.cum(p, i).exp() * track[p * nn + i] * bundle.grid.dt(i))
            .sum()
    });
    PsiResult { track, n_paths_used: np, estimate }
}
