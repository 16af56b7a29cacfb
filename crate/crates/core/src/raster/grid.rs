use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// GDAL-style affine geotransform `[origin_x, pixel_w, rot_x, origin_y, rot_y, -pixel_h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform(pub [f64; 6]);

impl GeoTransform {
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_w: f64, pixel_h: f64) -> Self {
        GeoTransform([origin_x, pixel_w, 0.0, origin_y, 0.0, -pixel_h])
    }

    /// Unit pixels with the origin at the top-left corner.
    pub fn identity() -> Self {
        Self::north_up(0.0, 0.0, 1.0, 1.0)
    }

    pub fn pixel_width(&self) -> f64 {
        self.0[1]
    }

    pub fn pixel_height(&self) -> f64 {
        -self.0[5]
    }

    /// Maps fractional pixel coordinates `(col, row)` to ground coordinates.
    pub fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        let g = &self.0;
        (
            g[0] + col * g[1] + row * g[2],
            g[3] + col * g[4] + row * g[5],
        )
    }
}

impl Default for GeoTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// A georeferenced float raster, band-sequential and row-major within each band.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f32>,
    geotransform: GeoTransform,
    nodata: Option<f32>,
    band_names: Vec<String>,
}

impl Grid {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        data: Vec<f32>,
        geotransform: GeoTransform,
        nodata: Option<f32>,
        band_names: Vec<String>,
    ) -> Result<Self> {
        let grid = Grid {
            width,
            height,
            bands,
            data,
            geotransform,
            nodata,
            band_names,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Single-band grid with unit geotransform, for tests and synthetic data.
    pub fn from_band(width: usize, height: usize, data: Vec<f32>, name: &str) -> Result<Self> {
        Self::new(
            width,
            height,
            1,
            data,
            GeoTransform::identity(),
            None,
            vec![name.to_string()],
        )
    }

    pub fn filled(width: usize, height: usize, bands: usize, value: f32) -> Result<Self> {
        let names = (1..=bands).map(|b| format!("band{b}")).collect();
        Self::new(
            width,
            height,
            bands,
            vec![value; width * height * bands],
            GeoTransform::identity(),
            None,
            names,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.width, self.height, self.bands
            )));
        }
        let expected = self.width * self.height * self.bands;
        if self.data.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "data length {} does not match {}x{}x{} = {expected}",
                self.data.len(),
                self.width,
                self.height,
                self.bands
            )));
        }
        let (pw, ph) = (
            self.geotransform.pixel_width(),
            self.geotransform.pixel_height(),
        );
        if !(pw > 0.0 && ph > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "pixel size must be positive, got {pw} x {ph}"
            )));
        }
        if self.band_names.len() != self.bands {
            return Err(Error::InvalidGrid(format!(
                "{} band names for {} bands",
                self.band_names.len(),
                self.bands
            )));
        }
        if let Some(nd) = self.nodata {
            if !nd.is_finite() {
                return Err(Error::InvalidGrid("nodata sentinel must be finite".into()));
            }
        }
        if let Some(i) = self
            .data
            .iter()
            .position(|&v| !v.is_finite() && !self.is_nodata(v))
        {
            return Err(Error::InvalidGrid(format!(
                "non-finite value at flat index {i}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn geotransform(&self) -> GeoTransform {
        self.geotransform
    }

    pub fn nodata(&self) -> Option<f32> {
        self.nodata
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn set_band_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.bands {
            return Err(Error::InvalidGrid(format!(
                "{} band names for {} bands",
                names.len(),
                self.bands
            )));
        }
        self.band_names = names;
        Ok(())
    }

    pub fn with_geotransform(mut self, gt: GeoTransform) -> Result<Self> {
        self.geotransform = gt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_nodata(mut self, nodata: Option<f32>) -> Result<Self> {
        self.nodata = nodata;
        self.validate()?;
        Ok(self)
    }

    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        self.nodata == Some(v)
    }

    pub fn band_len(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.band_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.band_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.band_len() + row * self.width + col]
    }

    /// Copies band `b` out as a single-band grid sharing georeferencing.
    pub fn extract_band(&self, b: usize) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            bands: 1,
            data: self.band(b).to_vec(),
            geotransform: self.geotransform,
            nodata: self.nodata,
            band_names: vec![self.band_names[b].clone()],
        }
    }

    /// Stacks single- or multi-band grids of identical shape and georeferencing.
    pub fn stack(grids: &[&Grid]) -> Result<Grid> {
        let first = grids
            .first()
            .ok_or_else(|| Error::Empty("no grids to stack".into()))?;
        let mut data = Vec::new();
        let mut names = Vec::new();
        for g in grids {
            first.check_aligned(g)?;
            data.extend_from_slice(&g.data);
            names.extend(g.band_names.iter().cloned());
        }
        let nodata = grids.iter().find_map(|g| g.nodata);
        Grid::new(
            first.width,
            first.height,
            names.len(),
            data,
            first.geotransform,
            nodata,
            names,
        )
    }

    /// Errors unless `other` has the same width, height and geotransform.
    pub fn check_aligned(&self, other: &Grid) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.geotransform != other.geotransform {
            return Err(Error::ShapeMismatch(format!(
                "geotransform {:?} vs {:?}",
                self.geotransform.0, other.geotransform.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    width: usize,
    height: usize,
    bands: usize,
    dtype: String,
    geotransform: [f64; 6],
    nodata: Option<f32>,
    band_names: Vec<String>,
}

const DTYPE: &str = "f32le";

/// Header path and payload path for a grid file. `path` may name either
/// the header, the payload or the bare stem.
pub fn grid_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("grid") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".grid");
    let mut payload = stem.into_os_string();
    payload.push(".bin");
    (header.into(), payload.into())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let (header_path, payload_path) = grid_paths(path.as_ref());
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: header_path.clone(),
        reason: e.to_string(),
    })?;
    if header.dtype != DTYPE {
        return Err(Error::Header {
            path: header_path,
            reason: format!("unsupported dtype {:?}, expected {DTYPE:?}", header.dtype),
        });
    }
    if header.bands == 0 || header.width == 0 || header.height == 0 {
        return Err(Error::Header {
            path: header_path,
            reason: "dimensions must be positive".into(),
        });
    }
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let expected = header.width * header.height * header.bands * 4;
    if bytes.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Grid::new(
        header.width,
        header.height,
        header.bands,
        data,
        GeoTransform(header.geotransform),
        header.nodata,
        header.band_names,
    )
}

pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    grid.validate()?;
    let (header_path, payload_path) = grid_paths(path.as_ref());
    let header = Header {
        width: grid.width,
        height: grid.height,
        bands: grid.bands,
        dtype: DTYPE.into(),
        geotransform: grid.geotransform.0,
        nodata: grid.nodata,
        band_names: grid.band_names.clone(),
    };
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    let mut bytes = Vec::with_capacity(grid.data.len() * 4);
    for v in &grid.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))
}
