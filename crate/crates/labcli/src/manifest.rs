//! `MANIFEST`: one `<sha256>  <file>` line per artifact, sorted by name.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "MANIFEST";

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Regular files of `dir` other than the manifest, sorted.
pub fn artifact_names(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names = Vec::new();
    for e in fs::read_dir(dir)? {
        let e = e?;
        if e.file_type()?.is_file() {
            let n = e.file_name().to_string_lossy().into_owned();
            if n != MANIFEST {
                names.push(n);
            }
        }
    }
    names.sort();
    Ok(names)
}

pub fn write(dir: &Path) -> Result<(), CliError> {
    let mut s = String::new();
    for n in artifact_names(dir)? {
        s += &format!("{}  {n}\n", digest(&fs::read(dir.join(&n))?));
    }
    fs::write(dir.join(MANIFEST), s)?;
    Ok(())
}

pub fn read(dir: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| CliError::Other(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.split_once("  ")
                .map(|(h, n)| (n.to_string(), h.to_string()))
                .ok_or_else(|| CliError::Other(format!("MANIFEST line {}: expected `<sha256>  <file>`", i + 1)))
        })
        .collect()
}

/// Files whose hash differs from the manifest, plus listed files that are missing.
pub fn verify(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut bad = Vec::new();
    let listed = read(dir)?;
    for (name, hash) in &listed {
        match fs::read(dir.join(name)) {
            Ok(b) if digest(&b) == *hash => {}
            Ok(_) => bad.push(format!("{name}: hash differs from MANIFEST")),
            Err(_) => bad.push(format!("{name}: listed in MANIFEST but missing")),
        }
    }
    for n in artifact_names(dir)? {
        if !listed.iter().any(|(l, _)| *l == n) {
            bad.push(format!("{n}: not listed in MANIFEST"));
        }
    }
    Ok(bad)
}
