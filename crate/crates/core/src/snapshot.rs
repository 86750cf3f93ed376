//! Binary snapshot format: magic "DKW1", u32 d, u32 n, u32 component
//! count, then row-major little-endian f64 values.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{DkwError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{make_grid, TorusGrid};

const MAGIC: &[u8; 4] = b"DKW1";

fn write_header(w: &mut impl Write, d: u32, n: u32, ncomp: u32) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&ncomp.to_le_bytes())?;
    Ok(())
}

fn write_values(w: &mut impl Write, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_header(&mut file, f.grid.dim() as u32, f.grid.n() as u32, 1)?;
    write_values(&mut file, &f.values)
}

pub fn write_vector(path: &Path, f: &VectorField) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_header(
        &mut file,
        f.grid.dim() as u32,
        f.grid.n() as u32,
        f.grid.dim() as u32,
    )?;
    for c in &f.components {
        write_values(&mut file, c)?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<(usize, usize, usize)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| DkwError::Snapshot(format!("{}: truncated header", path.display())))?;
    if &magic != MAGIC {
        return Err(DkwError::Snapshot(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let mut word = [0u8; 4];
    let mut next = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut word)
            .map_err(|_| DkwError::Snapshot(format!("{}: truncated header", path.display())))?;
        Ok(u32::from_le_bytes(word))
    };
    let d = next(r)? as usize;
    let n = next(r)? as usize;
    let ncomp = next(r)? as usize;
    Ok((d, n, ncomp))
}

fn read_values(r: &mut impl Read, len: usize, path: &Path) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)
        .map_err(|_| DkwError::Snapshot(format!("{}: truncated payload", path.display())))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_scalar(path: &Path) -> Result<ScalarField> {
    let mut file = std::fs::File::open(path)?;
    let (d, n, ncomp) = read_header(&mut file, path)?;
    if ncomp != 1 {
        return Err(DkwError::Snapshot(format!(
            "{}: expected 1 component, found {ncomp}",
            path.display()
        )));
    }
    let grid = make_grid(d, n)?;
    let values = read_values(&mut file, grid.len(), path)?;
    Ok(ScalarField { grid, values })
}

pub fn read_vector(path: &Path) -> Result<VectorField> {
    let mut file = std::fs::File::open(path)?;
    let (d, n, ncomp) = read_header(&mut file, path)?;
    let grid: Arc<TorusGrid> = make_grid(d, n)?;
    if ncomp != d {
        return Err(DkwError::Snapshot(format!(
            "{}: expected {d} components, found {ncomp}",
            path.display()
        )));
    }
    let components = (0..ncomp)
        .map(|_| read_values(&mut file, grid.len(), path))
        .collect::<Result<Vec<_>>>()?;
    Ok(VectorField { grid, components })
}
