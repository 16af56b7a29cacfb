//! Synthetic scenes with known landslide ground truth.
//!
//! Amplitudes follow the multi-looked speckle model: intensity is the true
//! backscatter times a unit-mean Gamma(L, 1/L) variate, amplitude is its
//! square root. Landslide regions multiply the after-event amplitude by the
//! configured contrast. Terrain is a seeded fractal surface.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{write_grid, GeoTransform, Grid};
use crate::sampling::{rasterize_polygon, write_polygons, AnnotationPolygon, Label, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub landslide_count: usize,
    /// Annotated stable-ground regions placed away from landslides.
    pub non_landslide_count: usize,
    /// Range of region radii in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Mean VV amplitude before the event.
    pub vv_mean: f64,
    /// Mean VH amplitude before the event.
    pub vh_mean: f64,
    /// Equivalent number of looks of the speckle.
    pub looks: f64,
    /// After/before amplitude ratio inside landslides.
    pub contrast_vv: f64,
    pub contrast_vh: f64,
    /// Fractal persistence of the DEM, in (0, 1).
    pub roughness: f64,
    /// DEM height range in meters.
    pub relief: f64,
    /// Ground sampling distance in meters.
    pub pixel_size: f64,
    /// Minimum clearance between regions in pixels.
    pub gap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 256,
            height: 256,
            landslide_count: 8,
            non_landslide_count: 8,
            radius_min: 16.0,
            radius_max: 24.0,
            vv_mean: 0.3,
            vh_mean: 0.1,
            looks: 4.0,
            contrast_vv: 2.0,
            contrast_vh: 1.7,
            roughness: 0.55,
            relief: 300.0,
            pixel_size: 10.0,
            gap: 4.0,
            seed: 0,
        }
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 500;
const RING_VERTICES: usize = 48;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width < 64 || self.height < 64 {
            return bad(format!(
                "scene must be at least 64x64, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.contrast_vv > 0.0 && self.contrast_vh > 0.0) {
            return bad("contrast must be positive".into());
        }
        if !(self.radius_min >= 2.0 && self.radius_max >= self.radius_min) {
            return bad(format!(
                "radius range [{}, {}] invalid",
                self.radius_min, self.radius_max
            ));
        }
        if self.looks.is_nan() || self.looks < 1.0 {
            return bad(format!("looks {} must be at least 1", self.looks));
        }
        if !(self.roughness > 0.0 && self.roughness < 1.0) {
            return bad(format!("roughness {} outside (0, 1)", self.roughness));
        }
        if !(self.vv_mean > 0.0
            && self.vh_mean > 0.0
            && self.pixel_size > 0.0
            && self.relief >= 0.0)
        {
            return bad("means, pixel size and relief must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub vv_before: Grid,
    pub vv_after: Grid,
    pub vh_before: Grid,
    pub vh_after: Grid,
    pub dem: Grid,
    pub slope: Grid,
    /// Three bands named Red, Green, Blue.
    pub rgb: Grid,
    pub truth_mask: Mask,
    /// Landslide polygons first, then stable-ground polygons.
    pub truth_polygons: Vec<AnnotationPolygon>,
}

impl SynthScene {
    /// Every single-band source, keyed by band name via [`crate::raster::sources_from_grids`].
    pub fn grids(&self) -> [&Grid; 7] {
        [
            &self.vv_before,
            &self.vv_after,
            &self.vh_before,
            &self.vh_after,
            &self.dem,
            &self.slope,
            &self.rgb,
        ]
    }
}

/// Slope in degrees, `atan(|grad z|)`, from central differences in ground
/// units; one-sided differences on the border.
pub fn slope_from_dem(dem: &Grid) -> Result<Grid> {
    if dem.bands() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "DEM must be single-band, got {}",
            dem.bands()
        )));
    }
    let (w, h) = (dem.width(), dem.height());
    if w < 3 || h < 3 {
        return Err(Error::ShapeMismatch(format!(
            "DEM {w}x{h} smaller than 3x3"
        )));
    }
    let gt = dem.geotransform();
    let (pw, ph) = (gt.pixel_width(), gt.pixel_height());
    let z = |r: usize, c: usize| dem.get(0, r, c) as f64;
    let diff = |lo: f64, hi: f64, steps: f64, spacing: f64| (hi - lo) / (steps * spacing);
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let gx = match c {
                0 => diff(z(r, 0), z(r, 1), 1.0, pw),
                _ if c == w - 1 => diff(z(r, c - 1), z(r, c), 1.0, pw),
                _ => diff(z(r, c - 1), z(r, c + 1), 2.0, pw),
            };
            let gy = match r {
                0 => diff(z(0, c), z(1, c), 1.0, ph),
                _ if r == h - 1 => diff(z(r - 1, c), z(r, c), 1.0, ph),
                _ => diff(z(r - 1, c), z(r + 1, c), 2.0, ph),
            };
            out.push(gx.hypot(gy).atan().to_degrees() as f32);
        }
    }
    Grid::new(w, h, 1, out, gt, None, vec!["Slope".into()])
}

/// Bilinear interpolation of a random lattice with spacing `cell`, in [0, 1].
fn value_noise<R: Rng>(w: usize, h: usize, cell: f64, rng: &mut R) -> Vec<f64> {
    let lw = (w as f64 / cell).ceil() as usize + 2;
    let lh = (h as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..lw * lh).map(|_| rng.random()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let y = r as f64 / cell;
        let (y0, fy) = (y.floor() as usize, smooth(y.fract()));
        for c in 0..w {
            let x = c as f64 / cell;
            let (x0, fx) = (x.floor() as usize, smooth(x.fract()));
            let at = |yy: usize, xx: usize| lattice[yy * lw + xx];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Sum of octaves with amplitude `persistence^k`, rescaled to [0, 1].
fn fractal_noise<R: Rng>(
    w: usize,
    h: usize,
    base_cell: f64,
    persistence: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut acc = vec![0.0; w * h];
    let mut amp = 1.0;
    let mut cell = base_cell;
    while cell >= 1.0 {
        for (a, v) in acc.iter_mut().zip(value_noise(w, h, cell, rng)) {
            *a += amp * v;
        }
        amp *= persistence;
        cell /= 2.0;
    }
    let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    acc.iter().map(|v| (v - lo) / span).collect()
}

struct Region {
    cx: f64,
    cy: f64,
    reach: f64,
    polygon: AnnotationPolygon,
}

/// Star-shaped ring: a rotated ellipse with low-order harmonic wobble.
fn amoeboid<R: Rng>(cfg: &SynthConfig, rng: &mut R, label: Label) -> Result<Region> {
    let a = rng.random_range(cfg.radius_min..=cfg.radius_max);
    let b = a * rng.random_range(0.7..=1.0);
    let phi = rng.random_range(0.0..TAU);
    let wobble: Vec<(f64, f64)> = (2..=4)
        .map(|_| (rng.random_range(0.0..0.06), rng.random_range(0.0..TAU)))
        .collect();
    let margin = a * 1.2 + 1.0;
    let cx = rng.random_range(margin..cfg.width as f64 - margin);
    let cy = rng.random_range(margin..cfg.height as f64 - margin);
    let (sp, cp) = phi.sin_cos();
    let mut reach: f64 = 0.0;
    let verts = (0..RING_VERTICES)
        .map(|i| {
            let t = i as f64 * TAU / RING_VERTICES as f64;
            let ellipse = a * b / ((b * t.cos()).powi(2) + (a * t.sin()).powi(2)).sqrt();
            let k: f64 = wobble
                .iter()
                .enumerate()
                .map(|(m, &(amp, ph))| amp * ((m + 2) as f64 * t + ph).cos())
                .sum();
            let rad = ellipse * (1.0 + k);
            reach = reach.max(rad);
            let (x, y) = (rad * t.cos(), rad * t.sin());
            (cx + x * cp - y * sp, cy + x * sp + y * cp)
        })
        .collect();
    Ok(Region {
        cx,
        cy,
        reach,
        polygon: AnnotationPolygon::new(verts, label)?,
    })
}

fn place_regions<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<Vec<AnnotationPolygon>> {
    let mut placed: Vec<Region> = Vec::new();
    let wanted = [
        (Label::Landslide, cfg.landslide_count),
        (Label::NonLandslide, cfg.non_landslide_count),
    ];
    for (label, count) in wanted {
        for k in 0..count {
            let mut ok = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let cand = amoeboid(cfg, rng, label)?;
                let (x0, y0, x1, y1) = cand.polygon.bounds();
                if x0 < 0.0 || y0 < 0.0 || x1 > cfg.width as f64 || y1 > cfg.height as f64 {
                    continue;
                }
                let clear = placed.iter().all(|p| {
                    (p.cx - cand.cx).hypot(p.cy - cand.cy) > p.reach + cand.reach + cfg.gap
                });
                if clear {
                    placed.push(cand);
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::Synth(format!(
                    "could not place {} region {} of {count} after {MAX_PLACEMENT_ATTEMPTS} attempts; \
                     enlarge the scene or reduce the count",
                    label.as_str(),
                    k + 1
                )));
            }
        }
    }
    Ok(placed.into_iter().map(|r| r.polygon).collect())
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gt = GeoTransform::north_up(500_000.0, 4_700_000.0, cfg.pixel_size, cfg.pixel_size);
    let band =
        |data: Vec<f32>, name: &str| Grid::new(w, h, 1, data, gt, None, vec![name.to_string()]);

    let base_cell = (w.max(h) as f64 / 2.0).max(2.0);
    let terrain = fractal_noise(w, h, base_cell, cfg.roughness, &mut rng);
    let dem = band(
        terrain.iter().map(|&t| (t * cfg.relief) as f32).collect(),
        "DEM",
    )?;
    let slope = slope_from_dem(&dem)?;

    let polygons = place_regions(cfg, &mut rng)?;
    let mut truth_mask = Mask::new(h, w);
    for p in polygons.iter().filter(|p| p.label() == Label::Landslide) {
        let m = rasterize_polygon(p, h, w);
        for (t, v) in truth_mask.data.iter_mut().zip(m.data) {
            *t |= v;
        }
    }

    // Stable scatterer field shared by both dates (land cover).
    let cover = fractal_noise(w, h, 32.0, 0.5, &mut rng);
    let speckle = Gamma::new(cfg.looks, 1.0 / cfg.looks)
        .map_err(|e| Error::Synth(format!("speckle distribution: {e}")))?;
    let amplitude = |mean: f64, contrast: f64, rng: &mut ChaCha8Rng| -> Vec<f32> {
        cover
            .iter()
            .zip(&truth_mask.data)
            .map(|(&cv, &inside)| {
                let k = if inside { contrast } else { 1.0 };
                let s: f64 = speckle.sample(rng);
                (mean * (0.7 + 0.6 * cv) * k * s.sqrt()) as f32
            })
            .collect()
    };
    let vv_before = band(amplitude(cfg.vv_mean, 1.0, &mut rng), "VV_before")?;
    let vv_after = band(
        amplitude(cfg.vv_mean, cfg.contrast_vv, &mut rng),
        "VV_after",
    )?;
    let vh_before = band(amplitude(cfg.vh_mean, 1.0, &mut rng), "VH_before")?;
    let vh_after = band(
        amplitude(cfg.vh_mean, cfg.contrast_vh, &mut rng),
        "VH_after",
    )?;

    let noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let mut rgb = Vec::with_capacity(3 * w * h);
    let vegetation = [0.22, 0.45, 0.18];
    let bare_soil = [0.55, 0.42, 0.30];
    for k in 0..3 {
        for (&cv, &inside) in cover.iter().zip(&truth_mask.data) {
            let base = if inside { bare_soil[k] } else { vegetation[k] };
            let v = base + 0.16 * (cv - 0.5) + noise.sample(&mut rng);
            rgb.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    let rgb = Grid::new(
        w,
        h,
        3,
        rgb,
        gt,
        None,
        vec!["Red".into(), "Green".into(), "Blue".into()],
    )?;

    Ok(SynthScene {
        vv_before,
        vv_after,
        vh_before,
        vh_after,
        dem,
        slope,
        rgb,
        truth_mask,
        truth_polygons: polygons,
    })
}

#[derive(Serialize)]
struct SceneManifest<'a> {
    config: &'a SynthConfig,
    seed: u64,
    grids: Vec<String>,
    polygons: &'static str,
    truth_mask: &'static str,
    landslide_pixels: usize,
}

/// Writes each source as `<band name>.grid`, the RGB stack as `RGB.grid`,
/// the mask as `truth_mask.grid`, polygons as `polygons.geojson` and a
/// `manifest.json` recording the config.
pub fn write_scene(scene: &SynthScene, cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut grids = Vec::new();
    for g in scene.grids() {
        let stem = if g.bands() == 3 {
            "RGB".to_string()
        } else {
            g.band_names()[0].clone()
        };
        write_grid(g, dir.join(format!("{stem}.grid")))?;
        grids.push(format!("{stem}.grid"));
    }
    let mask = Grid::new(
        scene.truth_mask.cols,
        scene.truth_mask.rows,
        1,
        scene
            .truth_mask
            .data
            .iter()
            .map(|&b| b as u8 as f32)
            .collect(),
        scene.dem.geotransform(),
        None,
        vec!["truth_mask".into()],
    )?;
    write_grid(&mask, dir.join("truth_mask.grid"))?;
    write_polygons(&scene.truth_polygons, dir.join("polygons.geojson"))?;
    let manifest = SceneManifest {
        config: cfg,
        seed: cfg.seed,
        grids,
        polygons: "polygons.geojson",
        truth_mask: "truth_mask.grid",
        landslide_pixels: scene.truth_mask.count(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, f: impl Fn(f64, f64) -> f64, pixel: f64) -> Grid {
        let data = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| f(c as f64 * pixel, r as f64 * pixel) as f32)
            .collect();
        Grid::new(
            w,
            h,
            1,
            data,
            GeoTransform::north_up(0.0, 0.0, pixel, pixel),
            None,
            vec!["DEM".into()],
        )
        .unwrap()
    }

    #[test]
    fn flat_dem_has_zero_slope() {
        let s = slope_from_dem(&plane(5, 4, |_, _| 12.0, 10.0)).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_gradient_is_45_degrees() {
        let s = slope_from_dem(&plane(9, 7, |x, _| x, 30.0)).unwrap();
        assert!(s.data().iter().all(|&v| (v - 45.0).abs() < 1e-4));
        let diag = slope_from_dem(&plane(9, 7, |x, y| 0.6 * x + 0.8 * y, 5.0)).unwrap();
        assert!(diag.data().iter().all(|&v| (v - 45.0).abs() < 1e-4));
    }

    #[test]
    fn cone_slope_is_radially_symmetric() {
        let n = 21;
        let c = 10.0;
        let s = slope_from_dem(&plane(n, n, |x, y| -((x - c).hypot(y - c)), 1.0)).unwrap();
        let at = |r: usize, col: usize| s.get(0, r, col);
        for r in 0..n {
            for col in 0..n {
                let v = at(r, col);
                assert!((v - at(n - 1 - r, col)).abs() < 1e-4);
                assert!((v - at(r, n - 1 - col)).abs() < 1e-4);
                assert!((v - at(col, r)).abs() < 1e-4);
            }
        }
        // Away from the apex and border the cone is a 45 degree surface.
        assert!((at(10, 16) - 45.0).abs() < 1e-3);
    }

    #[test]
    fn tiny_or_multiband_dem_rejected() {
        assert!(slope_from_dem(&plane(2, 5, |x, _| x, 1.0)).is_err());
        assert!(slope_from_dem(&Grid::filled(4, 4, 2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SynthConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.width = 32;
        assert!(cfg.validate().is_err());
        cfg = SynthConfig {
            contrast_vv: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overcrowded_scene_errors() {
        let cfg = SynthConfig {
            width: 64,
            height: 64,
            landslide_count: 20,
            ..Default::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Synth(_))));
    }

    #[test]
    fn no_landslides_gives_empty_mask() {
        let cfg = SynthConfig {
            width: 64,
            height: 64,
            landslide_count: 0,
            non_landslide_count: 0,
            ..Default::default()
        };
        let scene = generate(&cfg).unwrap();
        assert_eq!(scene.truth_mask.count(), 0);
        assert!(scene.truth_polygons.is_empty());
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SynthConfig {
            width: 96,
            height: 96,
            landslide_count: 2,
            non_landslide_count: 2,
            radius_min: 8.0,
            radius_max: 10.0,
            seed: 3,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        let b = generate(&SynthConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.vv_after, b.vv_after);
    }
}
