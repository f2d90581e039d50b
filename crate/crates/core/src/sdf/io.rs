//! SDF grid file format.
//!
//! Layout (all little-endian): magic "SDFG", version u32 = 1, nx/ny/nz as
//! u32, bounding box min/max as 6 f32, then nx·ny·nz f32 values in
//! x-fastest order.

use super::grid::{GridDims, GridSdf};
use crate::math::vec3;
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SDFG";
const VERSION: u32 = 1;

pub fn write_grid(path: &Path, grid: &GridSdf) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    let d = &grid.dims;
    for n in [d.nx, d.ny, d.nz] {
        f.write_all(&(n as u32).to_le_bytes())?;
    }
    for v in [d.bmin, d.bmax] {
        for c in [v.x, v.y, v.z] {
            f.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    for &v in grid.values() {
        f.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridSdf> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic, not an SDFG grid",
            path.display()
        )));
    }
    let version = read_u32(&mut f)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SDFG version {version}")));
    }
    let nx = read_u32(&mut f)? as usize;
    let ny = read_u32(&mut f)? as usize;
    let nz = read_u32(&mut f)? as usize;
    let mut bb = [0f32; 6];
    for b in &mut bb {
        *b = read_f32(&mut f)?;
    }
    let dims = GridDims::new(
        nx,
        ny,
        nz,
        vec3(bb[0] as f64, bb[1] as f64, bb[2] as f64),
        vec3(bb[3] as f64, bb[4] as f64, bb[5] as f64),
    )?;
    let count = dims.len();
    let mut payload = vec![0u8; count * 4];
    f.read_exact(&mut payload).map_err(|_| {
        Error::Format(format!(
            "{}: truncated payload, expected {count} f32 values",
            path.display()
        ))
    })?;
    // Reject trailing bytes so size mismatches are loud.
    let mut extra = [0u8; 1];
    if f.read(&mut extra)? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after payload",
            path.display()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    GridSdf::new(dims, values)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}
