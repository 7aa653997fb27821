//! Re-executes a stored run and compares every artifact.

use std::fs;
use std::path::Path;

use serde_json::Value;

use bsde_lab_core::solver::{read_solution, SolutionMeta};
use bsde_lab_core::timepaths::read_paths;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest;
use crate::run::{run_into, RunStatus, VOLATILE};

/// Relative tolerance for numeric fields.
pub const REPLAY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub status: RunStatus,
    pub compared: Vec<String>,
    /// First divergence per file, plus manifest problems.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REPLAY_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Path of the first differing field, or `None`.
pub fn json_diff(a: &Value, b: &Value, at: &str) -> Option<String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            (!close(x, y)).then(|| format!("{at}: {x} vs {y}"))
        }
        (Value::Object(x), Value::Object(y)) => {
            for (k, v) in x {
                let here = format!("{at}.{k}");
                match y.get(k) {
                    Some(w) => {
                        if let Some(d) = json_diff(v, w, &here) {
                            return Some(d);
                        }
                    }
                    None => return Some(format!("{here}: missing in replay")),
                }
            }
            y.keys().find(|k| !x.contains_key(*k)).map(|k| format!("{at}.{k}: only in replay"))
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Some(format!("{at}: length {} vs {}", x.len(), y.len()));
            }
            x.iter().zip(y).enumerate().find_map(|(i, (v, w))| json_diff(v, w, &format!("{at}[{i}]")))
        }
        _ => (a != b).then(|| format!("{at}: {a} vs {b}")),
    }
}

fn csv_diff(a: &[u8], b: &[u8]) -> Result<Option<String>, CliError> {
    let rows = |bytes: &[u8]| -> Result<Vec<csv::StringRecord>, CliError> {
        csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes)
            .records()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Other(format!("csv: {e}")))
    };
    let (ra, rb) = (rows(a)?, rows(b)?);
    if ra.len() != rb.len() {
        return Ok(Some(format!("{} rows vs {}", ra.len(), rb.len())));
    }
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        if x.len() != y.len() {
            return Ok(Some(format!("row {}: {} cells vs {}", i + 1, x.len(), y.len())));
        }
        for (j, (u, v)) in x.iter().zip(y).enumerate() {
            let same = match (u.parse::<f64>(), v.parse::<f64>()) {
                (Ok(p), Ok(q)) => close(p, q),
                _ => u == v,
            };
            if !same {
                return Ok(Some(format!("row {} column {}: {u} vs {v}", i + 1, j + 1)));
            }
        }
    }
    Ok(None)
}

fn slice_diff(what: &str, a: &[f64], b: &[f64]) -> Option<String> {
    if a.len() != b.len() {
        return Some(format!("{what}: length {} vs {}", a.len(), b.len()));
    }
    a.iter().zip(b).position(|(x, y)| !close(*x, *y)).map(|i| format!("{what}[{i}]: {} vs {}", a[i], b[i]))
}

fn solution_diff(a: &[u8], b: &[u8]) -> Result<Option<String>, CliError> {
    let sa = read_solution(a, SolutionMeta::default())?;
    let sb = read_solution(b, SolutionMeta::default())?;
    if (sa.n_paths, sa.n_nodes, sa.k, sa.d) != (sb.n_paths, sb.n_nodes, sb.k, sb.d) || sa.tau != sb.tau {
        return Ok(Some("header or stopping indices differ".into()));
    }
    Ok(slice_diff("y", &sa.y, &sb.y).or_else(|| slice_diff("z", &sa.z, &sb.z)))
}

fn file_diff(name: &str, a: &[u8], b: &[u8]) -> Result<Option<String>, CliError> {
    if a == b {
        return Ok(None);
    }
    if name == "paths.bin" {
        // paths must match byte for byte; the reader gives a precise location
        let (Ok(pa), Ok(pb)) = (read_paths(a), read_paths(b)) else {
            return Ok(Some("bytes differ and one side does not parse".into()));
        };
        return Ok(Some(
            slice_diff("increments", &pa.increments, &pb.increments)
                .unwrap_or_else(|| if pa.tau != pb.tau { "stopping indices differ".into() } else { "bytes differ".into() }),
        ));
    }
    if name == "solution.bin" {
        return Ok(Some(solution_diff(a, b).unwrap_or_else(|e| Some(format!("bytes differ and one side does not parse: {e}"))).unwrap_or_else(|| "bytes differ".into())));
    }
    if name.ends_with(".json") {
        let parse = |x: &[u8]| serde_json::from_slice::<Value>(x).map_err(|e| CliError::Other(format!("{name}: {e}")));
        return Ok(json_diff(&parse(a)?, &parse(b)?, "$"));
    }
    if name.ends_with(".csv") {
        return csv_diff(a, b);
    }
    Ok(Some("bytes differ".into()))
}

/// Compares two run directories, skipping volatile files.
pub fn compare_dirs(original: &Path, replayed: &Path) -> Result<(Vec<String>, Vec<String>), CliError> {
    let stable = |d: &Path| -> Result<Vec<String>, CliError> {
        Ok(manifest::artifact_names(d)?.into_iter().filter(|n| !VOLATILE.contains(&n.as_str())).collect())
    };
    let (na, nb) = (stable(original)?, stable(replayed)?);
    let mut mismatches = Vec::new();
    for n in na.iter().filter(|n| !nb.contains(n)) {
        mismatches.push(format!("{n}: not produced by the replay"));
    }
    for n in nb.iter().filter(|n| !na.contains(n)) {
        mismatches.push(format!("{n}: produced by the replay only"));
    }
    let mut compared = Vec::new();
    for n in na.iter().filter(|n| nb.contains(n)) {
        if let Some(d) = file_diff(n, &fs::read(original.join(n))?, &fs::read(replayed.join(n))?)? {
            mismatches.push(format!("{n}: {d}"));
        }
        compared.push(n.clone());
    }
    Ok((compared, mismatches))
}

/// Verifies the manifest of `dir`, re-runs its `config.json` and compares.
pub fn replay(dir: &Path) -> Result<ReplayReport, CliError> {
    let mut mismatches = manifest::verify(dir)?;
    let cfg = ExperimentConfig::load(&dir.join("config.json"))?;
    let tmp = tempfile::tempdir()?;
    let outcome = run_into(&cfg, tmp.path())?;
    let (compared, diffs) = compare_dirs(dir, tmp.path())?;
    mismatches.extend(diffs);
    Ok(ReplayReport { status: outcome.status, compared, mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_diff_names_the_field() {
        let a = json!({"x": [1.0, {"y": 2.0}], "s": "a"});
        assert_eq!(json_diff(&a, &a, "$"), None);
        let b = json!({"x": [1.0, {"y": 2.0 + 1e-14}], "s": "a"});
        assert_eq!(json_diff(&a, &b, "$"), None);
        let b = json!({"x": [1.0, {"y": 2.1}], "s": "a"});
        assert_eq!(json_diff(&a, &b, "$").unwrap(), "$.x[1].y: 2 vs 2.1");
        let b = json!({"x": [1.0, {"y": 2.0}], "s": "b"});
        assert!(json_diff(&a, &b, "$").unwrap().starts_with("$.s"));
    }

    #[test]
    fn csv_diff_is_cellwise() {
        assert_eq!(csv_diff(b"a,b\n1,2\n", b"a,b\n1.0,2\n").unwrap(), None);
        assert_eq!(csv_diff(b"a,b\n1,2\n", b"a,b\n1,3\n").unwrap().unwrap(), "row 2 column 2: 2 vs 3");
    }
}
