//! Monte Carlo laboratory for backward stochastic differential equations on a
//! random time horizon `[0, τ]` with stochastic monotonicity / Lipschitz
//! coefficients.
//!
//! The crate is organised bottom-up:
//!
//! | module         | role                                                                 |
//! |----------------|----------------------------------------------------------------------|
//! | [`timepaths`]  | grids, Brownian bundles, stopping times, coefficient and weight tracks |
//! | [`generators`] | driver definitions, the example gallery, truncation, hypothesis checkers |
//! | [`wnorms`]     | exponentially weighted `L^p` norms and the class-(D) estimate        |
//! | [`solver`]     | regression-based backward induction, Picard / subdivision, truncation schemes |
//! | [`estimates`]  | empirical a priori bound ratios and comparison checks                |
//! | [`scenario`]   | one-call setup of paths, tracks, `τ`, weights and terminal values   |
//!
//! Every data-parallel loop goes through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iteration otherwise.
//! Reductions use a fixed block size and a fixed pairwise combination order,
//! so results are bit-identical for any thread count.

pub mod error;
pub mod estimates;
pub mod expr;
pub mod generators;
pub mod par;
pub mod scenario;
pub mod solver;
pub mod timepaths;
pub mod wnorms;

pub use error::{LabError, Result};
