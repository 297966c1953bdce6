//! Trajectory artifacts: CSV tables and a little-endian binary frame.
//!
//! Binary layout:
//!
//! ```text
//! magic    4 bytes  "SKSM"
//! version  u32
//! dim      u32
//! n_paths  u64
//! grid     u64      recorded times per path
//! times    grid x f64
//! values   n_paths x grid x dim x f64, path-major
//! ```

use std::io::{Read, Write};

use super::Trajectory;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SKSM";
pub const VERSION: u32 = 1;

fn check_grid(trajs: &[Trajectory]) -> Result<(usize, usize)> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::Usage("no trajectories to export".into()))?;
    let (dim, grid) = (first.dim, first.times.len());
    if trajs.iter().any(|t| t.dim != dim || t.times != first.times) {
        return Err(Error::Usage("trajectories do not share a recording grid".into()));
    }
    Ok((dim, grid))
}

/// One row per path and retained time: `path,index,t,x0,..`. Keeps every `every`-th
/// recorded time plus the last one.
pub fn write_csv<W: Write>(mut w: W, trajs: &[Trajectory], every: usize) -> Result<()> {
    let (dim, grid) = check_grid(trajs)?;
    let every = every.max(1);
    write!(w, "path,index,t")?;
    for j in 0..dim {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for tr in trajs {
        for i in (0..grid).filter(|i| i % every == 0 || *i == grid - 1) {
            write!(w, "{},{},{}", tr.path, i, tr.times[i])?;
            for v in tr.position(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Long format `path,index,t,level,local_time,crossings`; `crossings` is the
/// signed total over the horizon and repeats on every row of a level.
pub fn write_local_time_csv<W: Write>(mut w: W, trajs: &[Trajectory], every: usize) -> Result<()> {
    let (_, grid) = check_grid(trajs)?;
    let every = every.max(1);
    writeln!(w, "path,index,t,level,local_time,crossings")?;
    for tr in trajs {
        for (series, crossings) in tr.local_time.iter().zip(&tr.crossings) {
            for i in (0..grid).filter(|i| i % every == 0 || *i == grid - 1) {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    tr.path, i, tr.times[i], series.level, series.values[i], crossings
                )?;
            }
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    let (dim, grid) = check_grid(trajs)?;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(trajs.len() as u64).to_le_bytes())?;
    w.write_all(&(grid as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * grid * (1 + dim));
    for t in &trajs[0].times {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    w.write_all(&buf)?;
    for tr in trajs {
        buf.clear();
        for v in &tr.positions {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Decoded binary frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFrame {
    pub version: u32,
    pub dim: usize,
    pub n_paths: usize,
    pub times: Vec<f64>,
    /// `n_paths` blocks of `times.len() * dim` values.
    pub values: Vec<f64>,
}

impl BinaryFrame {
    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.times.len() * self.dim;
        &self.values[p * n..(p + 1) * n]
    }
}

pub fn read_binary<R: Read>(mut r: R) -> Result<BinaryFrame> {
    let mut head = [0u8; 28];
    r.read_exact(&mut head)
        .map_err(|e| Error::Io(format!("truncated header: {e}")))?;
    if head[..4] != MAGIC {
        return Err(Error::Io("bad magic, not a trajectory frame".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(head[i..i + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Io(format!("unsupported frame version {version}")));
    }
    let dim = u32_at(8) as usize;
    let n_paths = u64_at(12) as usize;
    let grid = u64_at(20) as usize;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let expected = grid
        .checked_mul(1 + n_paths.saturating_mul(dim))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Io("frame size overflows".into()))?;
    if rest.len() != expected {
        return Err(Error::Io(format!(
            "frame body has {} bytes, header implies {expected}",
            rest.len()
        )));
    }
    let mut floats = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let times: Vec<f64> = floats.by_ref().take(grid).collect();
    let values: Vec<f64> = floats.collect();
    Ok(BinaryFrame {
        version,
        dim,
        n_paths,
        times,
        values,
    })
}
