use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Grid;
use crate::sampling::{rasterize_polygon, AnnotationPolygon, Label};

/// Patch side length in pixels.
pub const PATCH: usize = 25;
/// Channels per patch.
pub const CHANNELS: usize = 3;
pub const PATCH_LEN: usize = PATCH * PATCH * CHANNELS;

/// A labeled 25x25x3 clip, channel-last (`[row][col][band]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Vec<f32>,
    pub label: Label,
    /// `(row, col)` of the top-left corner in the source grid.
    pub origin: (usize, usize),
    pub source_polygon: usize,
}

impl Patch {
    pub fn new(
        pixels: Vec<f32>,
        label: Label,
        origin: (usize, usize),
        source_polygon: usize,
    ) -> Result<Self> {
        if pixels.len() != PATCH_LEN {
            return Err(Error::ShapeMismatch(format!(
                "patch holds {} values, expected {PATCH_LEN}",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!(
                "patch value {v} outside [0, 1]; normalize the composite first"
            )));
        }
        Ok(Patch {
            pixels,
            label,
            origin,
            source_polygon,
        })
    }
}

/// Copies the `PATCH`x`PATCH` window at `(row, col)` out of a 3-band grid into
/// channel-last order.
pub fn window(grid: &Grid, row: usize, col: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(PATCH_LEN);
    let bands: Vec<&[f32]> = (0..CHANNELS).map(|b| grid.band(b)).collect();
    let w = grid.width();
    for r in row..row + PATCH {
        for c in col..col + PATCH {
            let i = r * w + c;
            out.extend(bands.iter().map(|band| band[i]));
        }
    }
    out
}

/// Window offsets along one axis: `start + k * stride` for
/// `k in 0..=floor((extent - PATCH) / stride)`.
pub fn axis_offsets(start: usize, extent: usize, stride: usize) -> Vec<usize> {
    if extent < PATCH || stride == 0 {
        return Vec::new();
    }
    (0..=(extent - PATCH) / stride)
        .map(|k| start + k * stride)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    pub stride: usize,
    /// Minimum fraction of window pixels inside the polygon.
    pub min_overlap: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            stride: 13,
            min_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub patches: Vec<Patch>,
    /// Indices of polygons whose bounding box is smaller than a patch.
    pub skipped: Vec<usize>,
}

fn extract_one(
    grid: &Grid,
    poly: &AnnotationPolygon,
    id: usize,
    cfg: &ExtractConfig,
) -> Option<Vec<Patch>> {
    let (rows, cols) = (grid.height(), grid.width());
    let (x0, y0, x1, y1) = poly.bounds();
    let c0 = x0.floor().max(0.0) as usize;
    let r0 = y0.floor().max(0.0) as usize;
    let c1 = (x1.ceil() as usize).min(cols);
    let r1 = (y1.ceil() as usize).min(rows);
    let (h, w) = (r1.saturating_sub(r0), c1.saturating_sub(c0));
    if h < PATCH || w < PATCH {
        return None;
    }
    let mask = rasterize_polygon(poly, rows, cols);
    let need = cfg.min_overlap * (PATCH * PATCH) as f64;
    let mut out = Vec::new();
    for &r in &axis_offsets(r0, h, cfg.stride) {
        for &c in &axis_offsets(c0, w, cfg.stride) {
            let inside: usize = (r..r + PATCH)
                .map(|rr| (c..c + PATCH).filter(|&cc| mask.get(rr, cc)).count())
                .sum();
            if (inside as f64) < need {
                continue;
            }
            let pixels = window(grid, r, c);
            if pixels.iter().any(|&v| grid.is_nodata(v)) {
                continue;
            }
            out.push(Patch {
                pixels,
                label: poly.label(),
                origin: (r, c),
                source_polygon: id,
            });
        }
    }
    Some(out)
}

/// Tiles every polygon's bounding box with windows at `cfg.stride` and keeps
/// the ones sufficiently covered by the polygon. Polygons are processed in
/// parallel; output order is polygon order, then row-major window order.
pub fn extract_patches(
    grid: &Grid,
    polygons: &[AnnotationPolygon],
    cfg: &ExtractConfig,
) -> Result<Extraction> {
    if grid.bands() != CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "patch extraction needs a {CHANNELS}-band grid, got {}",
            grid.bands()
        )));
    }
    if cfg.stride == 0 {
        return Err(Error::InvalidConfig("stride must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.min_overlap) {
        return Err(Error::InvalidConfig(format!(
            "min_overlap {} outside [0, 1]",
            cfg.min_overlap
        )));
    }
    if let Some(v) = grid
        .data()
        .iter()
        .find(|&&v| !grid.is_nodata(v) && !(0.0..=1.0).contains(&v))
    {
        return Err(Error::InvalidGrid(format!(
            "value {v} outside [0, 1]; normalize the composite first"
        )));
    }
    for p in polygons {
        p.check_within(grid.height(), grid.width())?;
    }
    let per_polygon: Vec<Option<Vec<Patch>>> = polygons
        .par_iter()
        .enumerate()
        .map(|(id, p)| extract_one(grid, p, id, cfg))
        .collect();
    let mut out = Extraction::default();
    for (id, r) in per_polygon.into_iter().enumerate() {
        match r {
            Some(patches) => out.patches.extend(patches),
            None => {
                warn!("polygon {id}: bounding box smaller than {PATCH}x{PATCH}, skipped");
                out.skipped.push(id);
            }
        }
    }
    Ok(out)
}
