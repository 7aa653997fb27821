//! Command-line front end: configs, run directories, replay and checks.
//!
//! Each verb is a library function so the integration tests can drive it
//! without spawning the binary.

pub mod config;
pub mod error;
pub mod manifest;
pub mod replay;
pub mod run;
pub mod table;

use bsde_lab_core::generators::{gallery, WeightParams};

use crate::error::CliError;
use crate::table::Table;

/// Runs `f` on a pool of `threads` workers (`None` keeps the global pool).
#[cfg(feature = "parallel")]
pub fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Sequential build: the thread count is accepted and ignored.
#[cfg(not(feature = "parallel"))]
pub fn in_pool<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    Ok(f())
}

pub fn gallery_table(params: &WeightParams) -> Table {
    let mut t = Table::new(&["name", "k", "d", "t_max", "l1", "declared", "description"]);
    for p in gallery(params) {
        t.row(&[&p.name, &p.k.to_string(), &p.d.to_string(), &p.t_max.to_string(), &p.l1.to_string(), &p.declared.join(" "), &p.description]);
    }
    t
}

pub fn gallery_json(params: &WeightParams) -> String {
    serde_json::to_string_pretty(&gallery(params)).expect("gallery serializes")
}
