//! Trajectory export: CSV rows `(t, x, value)` and a compact binary format.
//!
//! Binary layout, all little-endian: the 8-byte magic `KPZSNAP1`, then
//! `n_cells: u64`, `x_min: f64`, `x_max: f64`, `periodic: u64` (0 or 1),
//! `seed: u64`, `n_rows: u64`, followed by `n_rows` rows of `1 + n_cells` f64
//! values (the time, then the field).

use std::io::{Read, Write};

use crate::error::{LabError, Result};
use crate::grid::{Boundary, Grid1D};
use crate::spde::Snapshot;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KPZSNAP1";

/// Writes one `t,x,value` row per cell and snapshot, after a `# schema=v1` line.
pub fn write_trajectory_csv<W: Write>(mut out: W, grid: &Grid1D, snapshots: &[Snapshot], seed: u64) -> Result<()> {
    writeln!(out, "# schema=v1")?;
    writeln!(out, "# seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "value"])?;
    for s in snapshots {
        for (x, v) in grid.centers().zip(&s.values) {
            w.write_record([s.t.to_string(), x.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshots<W: Write>(mut out: W, grid: &Grid1D, snapshots: &[Snapshot], seed: u64) -> Result<()> {
    out.write_all(SNAPSHOT_MAGIC)?;
    out.write_all(&(grid.n_cells() as u64).to_le_bytes())?;
    out.write_all(&grid.x_min().to_le_bytes())?;
    out.write_all(&grid.x_max().to_le_bytes())?;
    out.write_all(&u64::from(grid.boundary() == Boundary::Periodic).to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    out.write_all(&(snapshots.len() as u64).to_le_bytes())?;
    for s in snapshots {
        if s.values.len() != grid.n_cells() {
            return Err(LabError::invalid("snapshot", "row length differs from the grid"));
        }
        out.write_all(&s.t.to_le_bytes())?;
        for v in &s.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Decoded binary snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub grid: Grid1D,
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
}

fn word<R: Read>(r: &mut R) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_snapshots<R: Read>(mut input: R) -> Result<SnapshotFile> {
    if &word(&mut input)? != SNAPSHOT_MAGIC {
        return Err(LabError::invalid("snapshot", "missing KPZSNAP1 header"));
    }
    let n = u64::from_le_bytes(word(&mut input)?) as usize;
    let x_min = f64::from_le_bytes(word(&mut input)?);
    let x_max = f64::from_le_bytes(word(&mut input)?);
    let boundary = if u64::from_le_bytes(word(&mut input)?) == 1 { Boundary::Periodic } else { Boundary::Truncated };
    let seed = u64::from_le_bytes(word(&mut input)?);
    let rows = u64::from_le_bytes(word(&mut input)?) as usize;
    let grid = Grid1D::new(x_min, x_max, n, boundary)?;
    let mut snapshots = Vec::with_capacity(rows);
    for _ in 0..rows {
        let t = f64::from_le_bytes(word(&mut input)?);
        let values = (0..n).map(|_| word(&mut input).map(f64::from_le_bytes)).collect::<Result<_>>()?;
        snapshots.push(Snapshot { t, values });
    }
    Ok(SnapshotFile { grid, seed, snapshots })
}
