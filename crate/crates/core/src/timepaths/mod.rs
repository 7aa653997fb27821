//! Time grids, Brownian bundles, stopping times, coefficient and weight tracks.

mod artifact;
mod bundle;
mod grid;
mod stopping;
mod weight;

pub(crate) use artifact::{LeReader, LeWriter};
pub use artifact::{read_paths, write_paths, PATHS_MAGIC, PATHS_VERSION};
pub use bundle::{simulate_brownian, AuxDef, AuxKind, MomentReport, NodeState, PathBundle, PathFn};
pub(crate) use bundle::norm;
pub use grid::{Spacing, TimeGrid};
pub use stopping::{cap_tau_by_integral, realize_stopping_time, stopping_index_from_prefix, stopping_indices, StoppingTimeSpec};
pub use weight::{accumulate_weight, WeightTrack, WeightVariant, SATURATION_LOG};

use crate::error::{data, Result};
use crate::generators::{GeneratorSpec, Process};

/// Fills the generator's auxiliary functionals and coefficient tracks.
///
/// Tracks are evaluated up to each path's current `τ` and are zero beyond it.
/// The `alpha` track must lie in `(0, 1]` and be non-increasing up to `τ`.
pub fn evaluate_coefficients(bundle: &mut PathBundle, gen: &GeneratorSpec) -> Result<()> {
    bundle.evaluate_aux(&gen.aux)?;
    bundle.tracks.clear();
    for (proc, f) in &gen.coefficients {
        bundle.fill_track(proc.name(), f)?;
    }
    if let Some(alpha) = bundle.track(Process::Alpha.name()) {
        let nn = bundle.n_nodes();
        for p in 0..bundle.n_paths {
            let row = &alpha[p * nn..p * nn + bundle.tau[p] + 1];
            for (i, &a) in row.iter().enumerate() {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(data(format!("process 'alpha' is {a} on path {p} at node {i}, outside (0,1]")));
                }
                if i > 0 && a > row[i - 1] {
                    return Err(data(format!("process 'alpha' increases on path {p} at node {i}")));
                }
            }
        }
    }
    bundle.mask_beyond_tau();
    Ok(())
}
