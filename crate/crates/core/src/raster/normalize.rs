use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRange {
    pub min: f32,
    pub max: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormalizationSpec {
    /// Per-band min/max over non-nodata pixels of the grid being normalized.
    MinMax,
    /// Replays previously computed ranges, clamping into [0, 1].
    Fixed { ranges: Vec<BandRange> },
}

impl NormalizationSpec {
    pub fn ranges(&self) -> Option<&[BandRange]> {
        match self {
            NormalizationSpec::MinMax => None,
            NormalizationSpec::Fixed { ranges } => Some(ranges),
        }
    }
}

/// Min/max over the non-nodata pixels of every band. Bands with no valid
/// pixels get a degenerate `(0, 0)` range.
pub fn band_ranges(grid: &Grid) -> Vec<BandRange> {
    (0..grid.bands())
        .map(|b| {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for &v in grid.band(b) {
                if !grid.is_nodata(v) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > hi {
                BandRange { min: 0.0, max: 0.0 }
            } else {
                BandRange { min: lo, max: hi }
            }
        })
        .collect()
}

/// Rescales each band to [0, 1]. Returns the grid and a `Fixed` spec that
/// replays the identical transform on another scene.
pub fn normalize(grid: &Grid, spec: &NormalizationSpec) -> Result<(Grid, NormalizationSpec)> {
    let ranges = match spec {
        NormalizationSpec::MinMax => band_ranges(grid),
        NormalizationSpec::Fixed { ranges } => {
            if ranges.len() != grid.bands() {
                return Err(Error::ShapeMismatch(format!(
                    "{} normalization ranges for {} bands",
                    ranges.len(),
                    grid.bands()
                )));
            }
            ranges.clone()
        }
    };
    let mut out = grid.clone();
    for (b, r) in ranges.iter().enumerate() {
        let span = r.max - r.min;
        let nodata = grid.nodata();
        for v in out.band_mut(b) {
            if nodata == Some(*v) {
                continue;
            }
            *v = if span > 0.0 {
                ((*v - r.min) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    Ok((out, NormalizationSpec::Fixed { ranges }))
}
