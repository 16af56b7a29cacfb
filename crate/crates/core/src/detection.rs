//! Sliding-window scene mapping.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::nn::{Mode, Model, Tensor4};
use crate::raster::{write_grid, GeoTransform, Grid};
use crate::sampling::{sample_bilinear, window, CHANNELS, PATCH};

/// Side length the network consumes.
pub const NET_INPUT: usize = 32;
/// Nodata value of the probability raster.
pub const RASTER_NODATA: f32 = -1.0;

/// Bilinear 25x25 -> 32x32 per channel, corner-aligned: output index `i`
/// reads source coordinate `i * 24 / 31`.
pub fn resample_patch(pixels: &[f32]) -> Vec<f32> {
    resize_bilinear(pixels, PATCH, NET_INPUT, CHANNELS)
}

/// Corner-aligned bilinear resize of a square channel-last image.
pub fn resize_bilinear(pixels: &[f32], from: usize, to: usize, channels: usize) -> Vec<f32> {
    assert_eq!(pixels.len(), from * from * channels, "resize input size");
    let scale = if to > 1 {
        (from - 1) as f64 / (to - 1) as f64
    } else {
        0.0
    };
    let mut out = vec![0.0f32; to * to * channels];
    for r in 0..to {
        for c in 0..to {
            let o = (r * to + c) * channels;
            sample_bilinear(
                pixels,
                from,
                from,
                channels,
                c as f64 * scale,
                r as f64 * scale,
                &mut out[o..o + channels],
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlideConfig {
    pub step: usize,
    /// Windows per forward pass.
    pub batch: usize,
    /// A window is a detection when its landslide probability exceeds this.
    pub threshold: f32,
}

impl Default for SlideConfig {
    fn default() -> Self {
        SlideConfig {
            step: 2,
            batch: 64,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub center_row: usize,
    pub center_col: usize,
    pub probability: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    /// Windows classified as landslide, row-major by center.
    pub detections: Vec<Detection>,
    pub window: usize,
    pub step: usize,
    pub rows: usize,
    pub cols: usize,
    /// Number of windows evaluated.
    pub windows_evaluated: usize,
    pub geotransform: GeoTransform,
    /// Landslide probability at every window center, [`RASTER_NODATA`] elsewhere.
    pub probability_raster: Grid,
}

/// Top-left corners of every in-bounds window, row-major.
pub fn window_origins(rows: usize, cols: usize, step: usize) -> Vec<(usize, usize)> {
    if rows < PATCH || cols < PATCH || step == 0 {
        return Vec::new();
    }
    let rs = (rows - PATCH) / step + 1;
    let cs = (cols - PATCH) / step + 1;
    (0..rs)
        .flat_map(|i| (0..cs).map(move |j| (i * step, j * step)))
        .collect()
}

/// Classifies every `PATCH`x`PATCH` window at `cfg.step` in infer mode.
/// Windows containing nodata are not evaluated. Batches run in parallel and
/// are reassembled in row-major order.
pub fn slide(scene: &Grid, model: &Model<f32>, cfg: &SlideConfig) -> Result<DetectionSet> {
    if scene.bands() != CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "scene has {} bands, expected {CHANNELS}",
            scene.bands()
        )));
    }
    if scene.height() < PATCH || scene.width() < PATCH {
        return Err(Error::ShapeMismatch(format!(
            "scene {}x{} is smaller than the {PATCH}x{PATCH} window",
            scene.width(),
            scene.height()
        )));
    }
    if cfg.step == 0 || cfg.batch == 0 {
        return Err(Error::InvalidConfig(
            "step and batch must be at least 1".into(),
        ));
    }
    let origins: Vec<(usize, usize)> = window_origins(scene.height(), scene.width(), cfg.step)
        .into_iter()
        .filter(|&(r, c)| {
            scene.nodata().is_none() || !window(scene, r, c).iter().any(|&v| scene.is_nodata(v))
        })
        .collect();
    let probs: Vec<Vec<f32>> = origins
        .par_chunks(cfg.batch)
        .map(|chunk| {
            let mut data = Vec::with_capacity(chunk.len() * NET_INPUT * NET_INPUT * CHANNELS);
            for &(r, c) in chunk {
                data.extend(resample_patch(&window(scene, r, c)));
            }
            let x = Tensor4::new([chunk.len(), NET_INPUT, NET_INPUT, CHANNELS], data)?;
            let p = model.forward(&x, Mode::Infer)?;
            Ok(p.chunks_exact(2).map(|row| row[1]).collect())
        })
        .collect::<Result<_>>()?;
    let probs = probs.concat();

    let (rows, cols) = (scene.height(), scene.width());
    let half = PATCH / 2;
    let mut raster = vec![RASTER_NODATA; rows * cols];
    let mut detections = Vec::new();
    for (&(r, c), &p) in origins.iter().zip(&probs) {
        let (cr, cc) = (r + half, c + half);
        raster[cr * cols + cc] = p;
        if p > cfg.threshold {
            detections.push(Detection {
                center_row: cr,
                center_col: cc,
                probability: p,
            });
        }
    }
    let probability_raster = Grid::new(
        cols,
        rows,
        1,
        raster,
        scene.geotransform(),
        Some(RASTER_NODATA),
        vec!["landslide_probability".into()],
    )?;
    Ok(DetectionSet {
        detections,
        window: PATCH,
        step: cfg.step,
        rows,
        cols,
        windows_evaluated: origins.len(),
        geotransform: scene.geotransform(),
        probability_raster,
    })
}

/// JSON number with the shortest decimal that round-trips the f32.
fn f32_json(v: f32) -> Value {
    let short: f64 = format!("{v}").parse().expect("f32 display parses");
    json!(short)
}

/// Point features at pixel centers of each detection window center.
pub fn detections_geojson(ds: &DetectionSet) -> Value {
    let features: Vec<Value> = ds
        .detections
        .iter()
        .map(|d| {
            let (x, y) = ds
                .geotransform
                .apply(d.center_col as f64 + 0.5, d.center_row as f64 + 0.5);
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [x, y] },
                "properties": {
                    "row": d.center_row,
                    "col": d.center_col,
                    "probability": f32_json(d.probability),
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn detections_csv(ds: &DetectionSet) -> String {
    let mut out = String::from("row,col,probability\n");
    for d in &ds.detections {
        out.push_str(&format!(
            "{},{},{}\n",
            d.center_row, d.center_col, d.probability
        ));
    }
    out
}

/// Writes `detections.geojson`, `detections.csv` and `probability.grid`/`.bin` into `dir`.
pub fn export_detections(ds: &DetectionSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gj = dir.join("detections.geojson");
    let text = serde_json::to_string_pretty(&detections_geojson(ds))?;
    fs::write(&gj, text).map_err(|e| Error::io(&gj, e))?;
    let csv = dir.join("detections.csv");
    let mut f = fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    f.write_all(detections_csv(ds).as_bytes())
        .map_err(|e| Error::io(&csv, e))?;
    write_grid(&ds.probability_raster, dir.join("probability.grid"))
}
