//! Field snapshot container: a JSON document tagged `PMHD1` carrying the grid
//! header, the component arity and one `(k, re, im, ...)` record per retained
//! mode, for a sequence of time-stamped frames.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SnapshotError;
use crate::spectral::{SpectralField, TorusGrid, C64};

pub const MAGIC: &str = "PMHD1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    pub n_per_axis: usize,
    pub k_max: i32,
    pub dealias_fraction: f64,
}

/// Mode `k` followed by `(re, im)` for every component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRecord {
    pub k: [i32; 3],
    pub c: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub records: Vec<ModeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub magic: String,
    pub grid: GridHeader,
    pub arity: usize,
    pub frames: Vec<Frame>,
}

impl Snapshot {
    /// Frames must share one grid and arity.
    pub fn new(frames: &[(f64, &SpectralField)]) -> Result<Self, SnapshotError> {
        let first = frames.first().ok_or_else(|| SnapshotError::Malformed("no frames".into()))?.1;
        let grid = first.grid();
        let arity = first.ncomp();
        let lat = grid.lattice();
        let mut out = Vec::with_capacity(frames.len());
        for (t, f) in frames {
            if f.grid() != grid || f.ncomp() != arity {
                return Err(SnapshotError::Malformed("frames differ in grid or arity".into()));
            }
            let records = (0..lat.len())
                .map(|m| ModeRecord {
                    k: lat.mode(m),
                    c: (0..arity).map(|c| [f.comp(c)[m].re, f.comp(c)[m].im]).collect(),
                })
                .collect();
            out.push(Frame { t: *t, records });
        }
        Ok(Self {
            magic: MAGIC.to_string(),
            grid: GridHeader { n_per_axis: grid.n(), k_max: grid.k_max(), dealias_fraction: grid.dealias_fraction() },
            arity,
            frames: out,
        })
    }

    /// Rebuilds the grid and the time-stamped fields.
    pub fn fields(&self) -> Result<(Arc<TorusGrid>, Vec<(f64, SpectralField)>), SnapshotError> {
        if self.magic != MAGIC {
            return Err(SnapshotError::Magic);
        }
        let grid = TorusGrid::with_fraction(self.grid.n_per_axis, self.grid.dealias_fraction)?;
        if grid.k_max() != self.grid.k_max {
            return Err(SnapshotError::Malformed(format!(
                "k_max {} inconsistent with n = {} and fraction {}",
                self.grid.k_max, self.grid.n_per_axis, self.grid.dealias_fraction
            )));
        }
        let lat = grid.lattice();
        let mut out = Vec::with_capacity(self.frames.len());
        for frame in &self.frames {
            let mut f = SpectralField::zeros(&grid, self.arity);
            for r in &frame.records {
                let m = lat
                    .index(r.k)
                    .ok_or_else(|| SnapshotError::Malformed(format!("mode {:?} outside lattice", r.k)))?;
                if r.c.len() != self.arity {
                    return Err(SnapshotError::Malformed(format!("record {:?} has {} components", r.k, r.c.len())));
                }
                for (c, [re, im]) in r.c.iter().enumerate() {
                    f.comp_mut(c)[m] = C64::new(*re, *im);
                }
            }
            out.push((frame.t, f));
        }
        Ok((grid, out))
    }
}

pub fn write_snapshot(path: &Path, frames: &[(f64, &SpectralField)]) -> Result<(), SnapshotError> {
    let snap = Snapshot::new(frames)?;
    let text = serde_json::to_string(&snap).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Vec<(f64, SpectralField)>, SnapshotError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
    if value.get("magic").and_then(|m| m.as_str()) != Some(MAGIC) {
        return Err(SnapshotError::Magic);
    }
    let snap: Snapshot = serde_json::from_value(value).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
    Ok(snap.fields()?.1)
}
