use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Class label. The discriminant is the network's class index and the
/// on-disk label byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonLandslide = 0,
    Landslide = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NonLandslide, Label::Landslide];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NonLandslide),
            1 => Some(Label::Landslide),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonLandslide => "non_landslide",
            Label::Landslide => "landslide",
        }
    }
}

/// Annotation ring in pixel coordinates (x = column, y = row, origin at the
/// top-left corner of the grid).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationPolygon {
    vertices: Vec<(f64, f64)>,
    label: Label,
}

impl AnnotationPolygon {
    /// Accepts an open or explicitly closed ring. Rejects rings with fewer than
    /// three distinct vertices, zero area, or self-intersections.
    pub fn new(mut vertices: Vec<(f64, f64)>, label: Label) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "ring needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|&(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let poly = AnnotationPolygon { vertices, label };
        if poly.area() == 0.0 {
            return Err(Error::InvalidPolygon("ring has zero area".into()));
        }
        if !poly.is_simple() {
            return Err(Error::InvalidPolygon("ring self-intersects".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, label: Label) -> Result<Self> {
        Self::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)], label)
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn label(&self) -> Label {
        self.label
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x1, y1) = self.vertices[i];
                let (x2, y2) = self.vertices[(i + 1) % n];
                x1 * y2 - x2 * y1
            })
            .sum();
        twice.abs() / 2.0
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    pub fn check_within(&self, rows: usize, cols: usize) -> Result<()> {
        let (x0, y0, x1, y1) = self.bounds();
        if x0 < 0.0 || y0 < 0.0 || x1 > cols as f64 || y1 > rows as f64 {
            return Err(Error::InvalidPolygon(format!(
                "bounds ({x0}, {y0})-({x1}, {y1}) exceed a {cols}x{rows} grid"
            )));
        }
        Ok(())
    }

    /// Even-odd point test.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = self.vertices[i];
            let (xj, yj) = self.vertices[j];
            if (yi > py) != (yj > py) && px < crossing_x(xi, yi, xj, yj, py) {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edge = |i: usize| (self.vertices[i], self.vertices[(i + 1) % n]);
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edge(i);
                let (c, d) = edge(j);
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    if collinear_overlap(a, b, c, d) {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

#[inline]
fn crossing_x(xi: f64, yi: f64, xj: f64, yj: f64, y: f64) -> f64 {
    (xj - xi) * (y - yi) / (yj - yi) + xi
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Edges a-b and c-d share vertex b == c; they overlap if they fold back on each other.
fn collinear_overlap(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (shared, p, q) = if b == c {
        (b, a, d)
    } else if a == d {
        (a, b, c)
    } else {
        return segments_intersect(a, b, c, d);
    };
    if orient(p, shared, q) != 0.0 {
        return false;
    }
    // Collinear: overlapping iff p and q lie on the same side of the shared vertex.
    let dot = (p.0 - shared.0) * (q.0 - shared.0) + (p.1 - shared.1) * (q.1 - shared.1);
    dot > 0.0
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.cols + col] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Intersection over union; 1.0 when both are empty.
    pub fn iou(&self, other: &Mask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Cells whose centers `(c + 0.5, r + 0.5)` fall inside the ring, by scanline.
pub fn rasterize_polygon(poly: &AnnotationPolygon, rows: usize, cols: usize) -> Mask {
    let mut mask = Mask::new(rows, cols);
    let v = &poly.vertices;
    let n = v.len();
    let mut xs = Vec::with_capacity(n);
    for r in 0..rows {
        let py = r as f64 + 0.5;
        xs.clear();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = v[i];
            let (xj, yj) = v[j];
            if (yi > py) != (yj > py) {
                xs.push(crossing_x(xi, yi, xj, yj, py));
            }
            j = i;
        }
        xs.sort_by(f64::total_cmp);
        // A center is inside iff an odd number of crossings lie strictly to
        // its right, i.e. it sits in some [xs[2k], xs[2k+1]) span.
        for pair in xs.chunks_exact(2) {
            let (x0, x1) = (pair[0], pair[1]);
            let start = ((x0 - 0.5).floor().max(0.0) as usize).min(cols);
            for c in start..cols {
                let px = c as f64 + 0.5;
                if px >= x1 {
                    break;
                }
                if px >= x0 {
                    mask.set(r, c, true);
                }
            }
        }
    }
    mask
}

/// Parses a GeoJSON FeatureCollection of pixel-space Polygons, each carrying
/// `"label": "landslide" | "non_landslide"`. Only exterior rings are used.
pub fn polygons_from_geojson(text: &str) -> Result<Vec<AnnotationPolygon>> {
    let root: Value = serde_json::from_str(text)?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::InvalidPolygon("expected a FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidPolygon("missing features array".into()))?;
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let label = match f.pointer("/properties/label").and_then(Value::as_str) {
                Some("landslide") => Label::Landslide,
                Some("non_landslide") => Label::NonLandslide,
                other => {
                    return Err(Error::InvalidPolygon(format!(
                    "feature {i}: label must be \"landslide\" or \"non_landslide\", got {other:?}"
                )))
                }
            };
            let geom = f
                .get("geometry")
                .ok_or_else(|| Error::InvalidPolygon(format!("feature {i}: no geometry")))?;
            if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
                return Err(Error::InvalidPolygon(format!(
                    "feature {i}: only Polygon geometries are supported"
                )));
            }
            let ring = geom
                .pointer("/coordinates/0")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::InvalidPolygon(format!("feature {i}: no exterior ring")))?;
            let vertices = ring
                .iter()
                .map(|p| {
                    match (
                        p.get(0).and_then(Value::as_f64),
                        p.get(1).and_then(Value::as_f64),
                    ) {
                        (Some(x), Some(y)) => Ok((x, y)),
                        _ => Err(Error::InvalidPolygon(format!(
                            "feature {i}: bad coordinate {p}"
                        ))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            AnnotationPolygon::new(vertices, label)
                .map_err(|e| Error::InvalidPolygon(format!("feature {i}: {e}")))
        })
        .collect()
}

pub fn read_polygons(path: impl AsRef<Path>) -> Result<Vec<AnnotationPolygon>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    polygons_from_geojson(&text)
}

pub fn polygons_to_geojson(polygons: &[AnnotationPolygon]) -> Value {
    let features: Vec<Value> = polygons
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut ring: Vec<[f64; 2]> = p.vertices.iter().map(|&(x, y)| [x, y]).collect();
            ring.push(ring[0]);
            json!({
                "type": "Feature",
                "id": i,
                "properties": { "label": p.label.as_str() },
                "geometry": { "type": "Polygon", "coordinates": [ring] }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_polygons(polygons: &[AnnotationPolygon], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&polygons_to_geojson(polygons))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
