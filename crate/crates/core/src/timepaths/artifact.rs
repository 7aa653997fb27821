//! Little-endian binary encoding of [`PathBundle`]. The layout is documented
//! in `docs/formats.md`.

use std::io::{Read, Write};

use super::bundle::PathBundle;
use super::grid::{Spacing, TimeGrid};
use crate::error::{LabError, Result};

pub const PATHS_MAGIC: &[u8; 8] = b"BSDEPATH";
pub const PATHS_VERSION: u32 = 1;

pub(crate) struct LeWriter<W: Write>(pub W);

impl<W: Write> LeWriter<W> {
    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn f64s(&mut self, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.bytes(&buf)
    }
    pub fn name(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

pub(crate) struct LeReader<R: Read>(pub R);

impl<R: Read> LeReader<R> {
    pub fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| LabError::Format(format!("truncated artifact: {e}")))?;
        Ok(b)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }
    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| LabError::Format("size does not fit in usize".into()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n.checked_mul(8).ok_or_else(|| LabError::Format("array too large".into()))?];
        self.0
            .read_exact(&mut buf)
            .map_err(|e| LabError::Format(format!("truncated artifact: {e}")))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
    pub fn name(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let mut b = vec![0u8; n];
        self.0
            .read_exact(&mut b)
            .map_err(|e| LabError::Format(format!("truncated artifact: {e}")))?;
        String::from_utf8(b).map_err(|_| LabError::Format("name is not UTF-8".into()))
    }
}

pub(crate) fn write_grid<W: Write>(w: &mut LeWriter<W>, g: &TimeGrid) -> Result<()> {
    w.f64(g.t_max)?;
    w.u64(g.n_steps as u64)?;
    match g.spacing {
        Spacing::Uniform => {
            w.u8(0)?;
            w.f64(1.0)
        }
        Spacing::Geometric { ratio } => {
            w.u8(1)?;
            w.f64(ratio)
        }
    }
}

pub(crate) fn read_grid<R: Read>(r: &mut LeReader<R>) -> Result<TimeGrid> {
    let t_max = r.f64()?;
    let n_steps = r.usize()?;
    let kind = r.u8()?;
    let ratio = r.f64()?;
    let spacing = match kind {
        0 => Spacing::Uniform,
        1 => Spacing::Geometric { ratio },
        k => return Err(LabError::Format(format!("unknown spacing tag {k}"))),
    };
    TimeGrid::build(t_max, n_steps, spacing).map_err(|e| LabError::Format(e.to_string()))
}

/// Serializes every stored field of the bundle.
pub fn write_paths<W: Write>(bundle: &PathBundle, out: W) -> Result<()> {
    let mut w = LeWriter(out);
    w.bytes(PATHS_MAGIC)?;
    w.u32(PATHS_VERSION)?;
    w.u64(bundle.seed)?;
    write_grid(&mut w, &bundle.grid)?;
    w.u64(bundle.n_paths as u64)?;
    w.u64(bundle.d as u64)?;
    w.f64s(&bundle.increments)?;
    for &t in &bundle.tau {
        w.u64(t as u64)?;
    }
    for &c in &bundle.censored {
        w.u8(c as u8)?;
    }
    w.u32(bundle.tracks.len() as u32)?;
    for (name, v) in &bundle.tracks {
        w.name(name)?;
        w.f64s(v)?;
    }
    w.u32(bundle.aux_names.len() as u32)?;
    for name in &bundle.aux_names {
        w.name(name)?;
    }
    w.f64s(&bundle.aux)?;
    w.0.flush()?;
    Ok(())
}

pub fn read_paths<R: Read>(input: R) -> Result<PathBundle> {
    let mut r = LeReader(input);
    if &r.exact::<8>()? != PATHS_MAGIC {
        return Err(LabError::Format("bad magic, not a paths artifact".into()));
    }
    let version = r.u32()?;
    if version != PATHS_VERSION {
        return Err(LabError::Format(format!("unsupported paths version {version}")));
    }
    let seed = r.u64()?;
    let grid = read_grid(&mut r)?;
    let n_paths = r.usize()?;
    let d = r.usize()?;
    let n = grid.n_steps;
    let nn = n + 1;
    let inc = r.f64s(n_paths * n * d)?;
    let mut bundle = PathBundle::from_increments(grid, n_paths, d, seed, inc)
        .map_err(|e| LabError::Format(e.to_string()))?;
    for p in 0..n_paths {
        let t = r.usize()?;
        if t > n {
            return Err(LabError::Format(format!("tau index {t} beyond grid on path {p}")));
        }
        bundle.tau[p] = t;
    }
    for p in 0..n_paths {
        bundle.censored[p] = r.u8()? != 0;
    }
    let n_tracks = r.u32()?;
    for _ in 0..n_tracks {
        let name = r.name()?;
        let v = r.f64s(n_paths * nn)?;
        bundle.tracks.insert(name, v);
    }
    let n_aux = r.u32()? as usize;
    for _ in 0..n_aux {
        bundle.aux_names.push(r.name()?);
    }
    bundle.aux = r.f64s(n_paths * nn * n_aux)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timepaths::bundle::{simulate_brownian, AuxDef, AuxKind, NodeState, PathFn};
    use std::sync::Arc;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = TimeGrid::build(1.5, 7, Spacing::Geometric { ratio: 1.3 }).unwrap();
        let mut b = simulate_brownian(&g, 5, 2, 99).unwrap();
        b.evaluate_aux(&[AuxDef::new("i", AuxKind::RunningIntegral, Arc::new(|s: &NodeState| s.abs_b))])
            .unwrap();
        let f: PathFn = Arc::new(|s: &NodeState| s.abs_b.powi(2));
        b.fill_track("mu", &f).unwrap();
        b.tau[2] = 3;
        b.censored[4] = true;
        let mut bytes = Vec::new();
        write_paths(&b, &mut bytes).unwrap();
        let c = read_paths(bytes.as_slice()).unwrap();
        assert_eq!(c.increments, b.increments);
        assert_eq!(c.tau, b.tau);
        assert_eq!(c.censored, b.censored);
        assert_eq!(c.tracks, b.tracks);
        assert_eq!(c.aux, b.aux);
        assert_eq!(c.aux_names, b.aux_names);
        assert_eq!(c.grid, b.grid);
        let mut again = Vec::new();
        write_paths(&c, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_paths(&b"NOTPATHS"[..]), Err(LabError::Format(_))));
        let g = TimeGrid::build(1.0, 2, Spacing::Uniform).unwrap();
        let b = simulate_brownian(&g, 2, 1, 1).unwrap();
        let mut bytes = Vec::new();
        write_paths(&b, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_paths(bytes.as_slice()), Err(LabError::Format(_))));
    }
}
