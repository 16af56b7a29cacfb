use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{Patch, CHANNELS, PATCH};

/// Random geometric augmentation knobs. Flips fire with probability 1/2 when
/// enabled; the continuous knobs are symmetric uniform ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Degrees, in [0, 180].
    pub max_rotation: f64,
    /// Fraction, in [0, 0.5].
    pub max_zoom: f64,
    /// Fraction of the patch side, in [0, 0.5].
    pub max_translation: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            flip_horizontal: true,
            flip_vertical: true,
            max_rotation: 36.0,
            max_zoom: 0.1,
            max_translation: 0.1,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn disabled() -> Self {
        AugmentationConfig {
            flip_horizontal: false,
            flip_vertical: false,
            max_rotation: 0.0,
            max_zoom: 0.0,
            max_translation: 0.0,
            seed: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.flip_horizontal
            && !self.flip_vertical
            && self.max_rotation == 0.0
            && self.max_zoom == 0.0
            && self.max_translation == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.max_rotation) {
            return Err(Error::InvalidConfig(format!(
                "max_rotation {} outside [0, 180]",
                self.max_rotation
            )));
        }
        if !(0.0..=0.5).contains(&self.max_zoom) {
            return Err(Error::InvalidConfig(format!(
                "max_zoom {} outside [0, 0.5]",
                self.max_zoom
            )));
        }
        if !(0.0..=0.5).contains(&self.max_translation) {
            return Err(Error::InvalidConfig(format!(
                "max_translation {} outside [0, 0.5]",
                self.max_translation
            )));
        }
        Ok(())
    }
}

/// One realized draw of every knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip_h: bool,
    pub flip_v: bool,
    pub angle_deg: f64,
    pub scale: f64,
    /// Pixels, `(dx, dy)`.
    pub shift: (f64, f64),
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        flip_h: false,
        flip_v: false,
        angle_deg: 0.0,
        scale: 1.0,
        shift: (0.0, 0.0),
    };

    /// Always consumes six uniforms so streams stay aligned across configs.
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentationConfig, rng: &mut R) -> Self {
        let mut sym = |max: f64| {
            let u: f64 = rng.random();
            (2.0 * u - 1.0) * max
        };
        let fh = sym(1.0) < 0.0;
        let fv = sym(1.0) < 0.0;
        let angle_deg = sym(cfg.max_rotation);
        let scale = 1.0 + sym(cfg.max_zoom);
        let side = PATCH as f64;
        let dx = sym(cfg.max_translation) * side;
        let dy = sym(cfg.max_translation) * side;
        AugmentDraw {
            flip_h: cfg.flip_horizontal && fh,
            flip_v: cfg.flip_vertical && fv,
            angle_deg,
            scale,
            shift: (dx, dy),
        }
    }

    fn is_affine_identity(&self) -> bool {
        self.angle_deg == 0.0 && self.scale == 1.0 && self.shift == (0.0, 0.0)
    }
}

/// Mirrors columns of a channel-last square image in place.
pub fn flip_horizontal(pixels: &mut [f32], side: usize, channels: usize) {
    for r in 0..side {
        for c in 0..side / 2 {
            let a = (r * side + c) * channels;
            let b = (r * side + side - 1 - c) * channels;
            for k in 0..channels {
                pixels.swap(a + k, b + k);
            }
        }
    }
}

/// Mirrors rows of a channel-last square image in place.
pub fn flip_vertical(pixels: &mut [f32], side: usize, channels: usize) {
    let row = side * channels;
    for r in 0..side / 2 {
        let (top, bottom) = pixels.split_at_mut((side - 1 - r) * row);
        top[r * row..(r + 1) * row].swap_with_slice(&mut bottom[..row]);
    }
}

/// Bilinear read at fractional `(x, y)` with edge replication outside the frame.
pub fn sample_bilinear(
    pixels: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    x: f64,
    y: f64,
    out: &mut [f32],
) {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let at = |r: usize, c: usize, k: usize| pixels[(r * width + c) * channels + k];
    for (k, o) in out.iter_mut().enumerate().take(channels) {
        let top = lerp(at(y0, x0, k), at(y0, x1, k), fx);
        let bot = lerp(at(y1, x0, k), at(y1, x1, k), fx);
        *o = lerp(top, bot, fy);
    }
}

/// Exact at equal endpoints and never outside `[min(a, b), max(a, b)]`.
#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}

/// Rotates by `angle_deg` about the patch center, scales content by `scale`,
/// then shifts by `shift` pixels. Output pixel `p` reads input
/// `R^-1 (p - center - shift) / scale + center`.
pub fn affine_resample(
    pixels: &[f32],
    side: usize,
    channels: usize,
    draw: &AugmentDraw,
) -> Vec<f32> {
    let center = (side - 1) as f64 / 2.0;
    let (sin, cos) = draw.angle_deg.to_radians().sin_cos();
    let mut out = vec![0.0f32; pixels.len()];
    for r in 0..side {
        for c in 0..side {
            let px = c as f64 - center - draw.shift.0;
            let py = r as f64 - center - draw.shift.1;
            // inverse rotation
            let qx = (cos * px + sin * py) / draw.scale + center;
            let qy = (-sin * px + cos * py) / draw.scale + center;
            let o = (r * side + c) * channels;
            sample_bilinear(
                pixels,
                side,
                side,
                channels,
                qx,
                qy,
                &mut out[o..o + channels],
            );
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Applies a realized draw: flip-h, flip-v, then rotation, zoom and translation
/// as a single bilinear resampling pass.
pub fn apply_draw(patch: &Patch, draw: &AugmentDraw) -> Patch {
    let mut pixels = patch.pixels.clone();
    if draw.flip_h {
        flip_horizontal(&mut pixels, PATCH, CHANNELS);
    }
    if draw.flip_v {
        flip_vertical(&mut pixels, PATCH, CHANNELS);
    }
    if !draw.is_affine_identity() {
        pixels = affine_resample(&pixels, PATCH, CHANNELS, draw);
    }
    Patch {
        pixels,
        ..patch.clone()
    }
}

pub fn augment<R: Rng + ?Sized>(patch: &Patch, cfg: &AugmentationConfig, rng: &mut R) -> Patch {
    let draw = AugmentDraw::sample(cfg, rng);
    apply_draw(patch, &draw)
}
