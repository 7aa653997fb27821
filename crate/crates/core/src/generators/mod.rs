//! Driver definitions, the example gallery, truncation operators, and
//! probe-based checkers for the structural hypotheses.

mod checks;
mod gallery;
mod params;
mod psi;
mod spec;
mod truncation;

pub use checks::{
    check_continuity_y, check_declared, check_general_growth, check_growth_bound, check_integrability,
    check_lipschitz_z, check_monotonicity_y, check_one, check_sublinear_z, make_probe, mc_estimate,
    reevaluate_witness, run_probes, sublinear_side_integrals, CheckReport, Estimate, Margin, Probe, ProbeShape,
    Verdict, Witness, DEFAULT_PROBES, GROWTH_RADII, PROBE_CLIP, ROUNDING_ULPS, SATURATION_LIMIT, TOL_ABS,
};
pub use gallery::{counterexamples, gallery, gallery_names, preset, Preset, PresetInfo};
pub use params::WeightParams;
pub use psi::{default_sphere, psi_growth, sphere_directions, PsiResult, DEFAULT_LADDER, PSI_MAX_PATHS};
pub use spec::{
    terminal_values, Assumption, Driver, GeneratorSpec, GrowthBound, Process, SublinearForm, TerminalCtx, TerminalFn,
};
pub use truncation::{modified_alpha, truncate, truncate_in_place, truncated_data};
