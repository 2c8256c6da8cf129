//! Synthetic sensor with a planted PRNU pattern and configurable developing
//! pipelines.
//!
//! A capture samples a colour scene through an RGGB Bayer mosaic, applies the
//! multiplicative sensor model `raw = v * (1 + k) + shot + read` and clips to
//! `[0, 1]`. [`develop`] turns the mosaic back into a colour image through
//! demosaicing, white balance, a tone curve, optional denoising and
//! sharpening, and a crop.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoise::{gaussian_denoise, DenoiserSpec};
use crate::error::{Error, Result};
use crate::imaging::{crop_color, ColorImage, ImagePlane};

pub const MIN_SENSOR_SIZE: usize = 64;
pub const DEFAULT_STRENGTH: f64 = 0.02;
pub const DEFAULT_READ_NOISE_STD: f64 = 0.002;
pub const DEFAULT_SHOT_NOISE_SCALE: f64 = 1e-4;

/// Mixes a sequence of integers into one seed (SplitMix64 finalizer per step).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// --- sensor -------------------------------------------------------------------

/// Everything about a sensor except its PRNU plane; this is what gets
/// serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub id: String,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default = "default_read_noise")]
    pub read_noise_std: f64,
    #[serde(default = "default_shot_noise")]
    pub shot_noise_scale: f64,
    pub seed: u64,
}

fn default_strength() -> f64 {
    DEFAULT_STRENGTH
}
fn default_read_noise() -> f64 {
    DEFAULT_READ_NOISE_STD
}
fn default_shot_noise() -> f64 {
    DEFAULT_SHOT_NOISE_SCALE
}

impl SensorParams {
    pub fn new(id: impl Into<String>, width: usize, height: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            width,
            height,
            strength: DEFAULT_STRENGTH,
            read_noise_std: DEFAULT_READ_NOISE_STD,
            shot_noise_scale: DEFAULT_SHOT_NOISE_SCALE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SENSOR_SIZE || self.height < MIN_SENSOR_SIZE {
            return Err(Error::Argument(format!(
                "sensor {} is {}x{}, minimum is {MIN_SENSOR_SIZE}",
                self.id, self.width, self.height
            )));
        }
        if !(self.strength > 0.0 && self.strength <= 0.1) {
            return Err(Error::Argument(format!(
                "PRNU strength {} outside (0, 0.1]",
                self.strength
            )));
        }
        if !(self.read_noise_std >= 0.0 && self.shot_noise_scale >= 0.0) {
            return Err(Error::Argument("noise parameters must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorProfile {
    pub params: SensorParams,
    /// Planted PRNU `k`, zero-mean.
    pub prnu: ImagePlane,
}

impl SensorProfile {
    /// Sensor with an explicit PRNU plane; only dimensions are checked.
    pub fn from_parts(params: SensorParams, prnu: ImagePlane) -> Result<Self> {
        if prnu.dims() != (params.width, params.height) {
            return Err(Error::Shape("PRNU plane does not match sensor size".into()));
        }
        Ok(Self { params, prnu })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.params.width, self.params.height)
    }

    pub fn id(&self) -> &str {
        &self.params.id
    }
}

/// Draws i.i.d. Gaussian PRNU with the requested strength, mean removed.
pub fn synth_sensor(params: SensorParams) -> Result<SensorProfile> {
    params.validate()?;
    let mut rng = rng(derive_seed(&[params.seed, 0x5e45]));
    let normal = Normal::new(0.0, params.strength).expect("positive std");
    let k = ImagePlane::from_fn(params.width, params.height, |_, _| normal.sample(&mut rng));
    let mean = k.mean();
    let prnu = k.map(|v| v - mean);
    Ok(SensorProfile { params, prnu })
}

// --- scenes -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneKind {
    Flat { level: f64 },
    Gradient,
    Texture,
}

/// Synthetic colour scene. Textures are seeded value noise over several
/// octaves, stretched per channel to `[0.1, 0.9]`.
pub fn synth_scene(width: usize, height: usize, kind: SceneKind, seed: u64) -> Result<ColorImage> {
    if width < MIN_SENSOR_SIZE || height < MIN_SENSOR_SIZE {
        return Err(Error::Argument(format!(
            "scene {width}x{height} below minimum {MIN_SENSOR_SIZE}"
        )));
    }
    match kind {
        SceneKind::Flat { level } => {
            if !(0.0..=1.0).contains(&level) {
                return Err(Error::Argument(format!("flat level {level} outside [0, 1]")));
            }
            Ok(ColorImage::gray(ImagePlane::filled(width, height, level)))
        }
        SceneKind::Gradient => {
            let span = (width + height - 2) as f64;
            let ramp = |lo: f64, hi: f64| {
                ImagePlane::from_fn(width, height, |x, y| lo + (hi - lo) * (x + y) as f64 / span)
            };
            ColorImage::new(ramp(0.05, 0.85), ramp(0.1, 0.9), ramp(0.15, 0.8))
        }
        SceneKind::Texture => {
            let mut rng = rng(derive_seed(&[seed, 0x7e47]));
            let shared = value_noise(width, height, &mut rng);
            let channel = |rng: &mut ChaCha8Rng| {
                let own = value_noise(width, height, rng);
                let mixed = shared.zip_map(&own, |s, o| 0.75 * s + 0.25 * o).expect("same dims");
                stretch(&mixed, 0.1, 0.9)
            };
            let r = channel(&mut rng);
            let g = channel(&mut rng);
            let b = channel(&mut rng);
            ColorImage::new(r, g, b)
        }
    }
}

const OCTAVES: [(usize, f64); 4] = [(64, 1.0), (32, 0.6), (16, 0.35), (8, 0.15)];

fn value_noise(width: usize, height: usize, rng: &mut ChaCha8Rng) -> ImagePlane {
    let mut acc = vec![0.0; width * height];
    for &(cell, amp) in &OCTAVES {
        let gw = width / cell + 3;
        let gh = height / cell + 3;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.sample(StandardNormal)).collect();
        // random sub-cell offset so octaves do not share a grid origin
        let ox = rng.random::<f64>();
        let oy = rng.random::<f64>();
        for y in 0..height {
            let fy = y as f64 / cell as f64 + oy;
            let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..width {
                let fx = x as f64 / cell as f64 + ox;
                let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let l = |gx: usize, gy: usize| lattice[gy * gw + gx];
                let top = l(ix, iy) + (l(ix + 1, iy) - l(ix, iy)) * tx;
                let bot = l(ix, iy + 1) + (l(ix + 1, iy + 1) - l(ix, iy + 1)) * tx;
                acc[y * width + x] += amp * (top + (bot - top) * ty);
            }
        }
    }
    ImagePlane::from_raw(width, height, acc)
}

fn smooth(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn stretch(p: &ImagePlane, lo: f64, hi: f64) -> ImagePlane {
    let min = p.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = p.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(f64::MIN_POSITIVE);
    p.map(|v| (lo + (hi - lo) * (v - min) / span).clamp(lo, hi))
}

// --- capture -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

/// RGGB: red at even/even, blue at odd/odd.
#[inline]
pub fn cfa_color(x: usize, y: usize) -> CfaColor {
    match (x % 2, y % 2) {
        (0, 0) => CfaColor::Red,
        (1, 1) => CfaColor::Blue,
        _ => CfaColor::Green,
    }
}

/// Samples the scene through the Bayer mosaic without any sensor effects.
pub fn mosaic(scene: &ColorImage) -> ImagePlane {
    let (w, h) = scene.dims();
    ImagePlane::from_fn(w, h, |x, y| match cfa_color(x, y) {
        CfaColor::Red => scene.r().get(x, y),
        CfaColor::Green => scene.g().get(x, y),
        CfaColor::Blue => scene.b().get(x, y),
    })
}

/// Mosaiced raw capture with PRNU, signal-dependent shot noise and read
/// noise, clipped to `[0, 1]`.
pub fn capture(scene: &ColorImage, sensor: &SensorProfile, seed: u64) -> Result<ImagePlane> {
    if scene.dims() != sensor.dims() {
        return Err(Error::Shape(format!(
            "scene {}x{} vs sensor {}x{}",
            scene.width(),
            scene.height(),
            sensor.params.width,
            sensor.params.height
        )));
    }
    let mut rng = rng(derive_seed(&[sensor.params.seed, seed, 0xca97]));
    let shot = sensor.params.shot_noise_scale;
    let read = sensor.params.read_noise_std;
    let bayer = mosaic(scene);
    let data = bayer
        .data()
        .iter()
        .zip(sensor.prnu.data())
        .map(|(&v, &k)| {
            let mut out = v * (1.0 + k);
            if shot > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                out += z * (v.max(0.0) * shot).sqrt();
            }
            if read > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                out += z * read;
            }
            out.clamp(0.0, 1.0)
        })
        .collect();
    ImagePlane::new(bayer.width(), bayer.height(), data)
}

// --- pipelines ------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demosaic {
    Nearest,
    Bilinear,
    EdgeDirected,
}

impl fmt::Display for Demosaic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Demosaic::Nearest => "nearest",
            Demosaic::Bilinear => "bilinear",
            Demosaic::EdgeDirected => "edge_directed",
        })
    }
}

impl FromStr for Demosaic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Demosaic::Nearest),
            "bilinear" => Ok(Demosaic::Bilinear),
            "edge_directed" => Ok(Demosaic::EdgeDirected),
            other => Err(Error::Config(format!("unknown demosaic {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteBalance {
    pub r_gain: f64,
    pub b_gain: f64,
}

impl Default for WhiteBalance {
    fn default() -> Self {
        Self {
            r_gain: 1.0,
            b_gain: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tone {
    /// `x^(1 / gamma)`.
    Gamma { gamma: f64 },
    /// `x - strength * sin(2 pi x) / (2 pi)`: steeper midtones, flatter ends.
    Scurve { strength: f64 },
}

impl Tone {
    pub fn apply(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            Tone::Gamma { gamma } => x.powf(1.0 / gamma),
            Tone::Scurve { strength } => {
                let tau = std::f64::consts::TAU;
                x - strength * (tau * x).sin() / tau
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub id: String,
    pub demosaic: Demosaic,
    #[serde(default)]
    pub white_balance: WhiteBalance,
    pub tone: Tone,
    #[serde(default)]
    pub denoise: Option<DenoiserSpec>,
    /// Unsharp-mask amount (Gaussian sigma 1).
    #[serde(default)]
    pub sharpen: Option<f64>,
    #[serde(default)]
    pub crop_offset: (usize, usize),
}

impl PipelineConfig {
    pub fn new(id: impl Into<String>, demosaic: Demosaic, tone: Tone) -> Self {
        Self {
            id: id.into(),
            demosaic,
            white_balance: WhiteBalance::default(),
            tone,
            denoise: None,
            sharpen: None,
            crop_offset: (0, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wb = self.white_balance;
        if !(wb.r_gain > 0.0 && wb.b_gain > 0.0) {
            return Err(Error::Config(format!("{}: gains must be positive", self.id)));
        }
        match self.tone {
            Tone::Gamma { gamma } if gamma.is_nan() || gamma <= 0.0 => {
                return Err(Error::Config(format!("{}: gamma must be positive", self.id)))
            }
            Tone::Scurve { strength } if !(0.0..1.0).contains(&strength) => {
                return Err(Error::Config(format!(
                    "{}: s-curve strength must be in [0, 1)",
                    self.id
                )))
            }
            _ => {}
        }
        if let Some(d) = &self.denoise {
            d.validate()?;
        }
        if let Some(a) = self.sharpen {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::Config(format!("{}: sharpen amount must be >= 0", self.id)));
            }
        }
        Ok(())
    }

    /// Output dimensions for a `width x height` raw.
    pub fn output_dims(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let (dx, dy) = self.crop_offset;
        let even = |n: usize, d: usize| n.checked_sub(d).map(|r| r & !1).filter(|&r| r > 0);
        match (even(width, dx), even(height, dy)) {
            (Some(w), Some(h)) => Ok((w, h)),
            _ => Err(Error::Config(format!(
                "{}: crop offset {:?} consumes the {width}x{height} frame",
                self.id, self.crop_offset
            ))),
        }
    }
}

/// Runs a raw mosaic through the pipeline.
pub fn develop(raw: &ImagePlane, config: &PipelineConfig) -> Result<ColorImage> {
    config.validate()?;
    let (ow, oh) = config.output_dims(raw.width(), raw.height())?;
    let rgb = match config.demosaic {
        Demosaic::Nearest => demosaic_nearest(raw),
        Demosaic::Bilinear => demosaic_bilinear(raw),
        Demosaic::EdgeDirected => demosaic_edge_directed(raw),
    };
    let wb = config.white_balance;
    let [r, g, b] = rgb.into_channels();
    let r = r.map(|v| v * wb.r_gain);
    let b = b.map(|v| v * wb.b_gain);
    let tone = config.tone;
    let mut img = ColorImage::new(r, g, b)?.map_channels(|p| p.map(|v| tone.apply(v)));
    if let Some(spec) = &config.denoise {
        let [r, g, b] = img.channels();
        img = ColorImage::new(spec.apply(r)?, spec.apply(g)?, spec.apply(b)?)?;
    }
    if let Some(amount) = config.sharpen {
        let [r, g, b] = img.channels();
        let sharpen = |p: &ImagePlane| -> Result<ImagePlane> {
            let blur = gaussian_denoise(p, 1.0)?;
            p.zip_map(&blur, |v, s| v + amount * (v - s))
        };
        img = ColorImage::new(sharpen(r)?, sharpen(g)?, sharpen(b)?)?;
    }
    let img = img.map_channels(|p| p.map(|v| v.clamp(0.0, 1.0)));
    let (dx, dy) = config.crop_offset;
    crop_color(&img, dx, dy, ow, oh)
}

/// Whole-sample mirror that keeps CFA parity: `-1 -> 1`, `n -> n - 2`.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

struct Raw<'a> {
    p: &'a ImagePlane,
}

impl Raw<'_> {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        self.p
            .get(mirror(x, self.p.width()), mirror(y, self.p.height()))
    }
}

fn build(w: usize, h: usize, mut f: impl FnMut(isize, isize) -> [f64; 3]) -> ColorImage {
    let mut ch = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for y in 0..h {
        for x in 0..w {
            let px = f(x as isize, y as isize);
            for c in 0..3 {
                ch[c].push(px[c]);
            }
        }
    }
    let [r, g, b] = ch;
    ColorImage::new(
        ImagePlane::from_raw(w, h, r),
        ImagePlane::from_raw(w, h, g),
        ImagePlane::from_raw(w, h, b),
    )
    .expect("equal dims")
}

/// Each 2x2 cell reuses its own R and B sample; G is taken from the site
/// itself or its in-cell horizontal neighbour.
pub fn demosaic_nearest(raw: &ImagePlane) -> ColorImage {
    let r = Raw { p: raw };
    build(raw.width(), raw.height(), |x, y| {
        let (bx, by) = (x & !1, y & !1);
        let red = r.at(bx, by);
        let blue = r.at(bx + 1, by + 1);
        let green = match cfa_color(x as usize, y as usize) {
            CfaColor::Green => r.at(x, y),
            CfaColor::Red => r.at(x + 1, y),
            CfaColor::Blue => r.at(x - 1, y),
        };
        [red, green, blue]
    })
}

pub fn demosaic_bilinear(raw: &ImagePlane) -> ColorImage {
    let r = Raw { p: raw };
    build(raw.width(), raw.height(), |x, y| {
        let c = r.at(x, y);
        let cross = (r.at(x - 1, y) + r.at(x + 1, y) + r.at(x, y - 1) + r.at(x, y + 1)) / 4.0;
        let diag = (r.at(x - 1, y - 1) + r.at(x + 1, y - 1) + r.at(x - 1, y + 1) + r.at(x + 1, y + 1))
            / 4.0;
        let horiz = (r.at(x - 1, y) + r.at(x + 1, y)) / 2.0;
        let vert = (r.at(x, y - 1) + r.at(x, y + 1)) / 2.0;
        match cfa_color(x as usize, y as usize) {
            CfaColor::Red => [c, cross, diag],
            CfaColor::Blue => [diag, cross, c],
            CfaColor::Green if y % 2 == 0 => [horiz, c, vert],
            CfaColor::Green => [vert, c, horiz],
        }
    })
}

/// Gradient-corrected, edge-directed green interpolation followed by
/// bilinear interpolation of colour differences.
pub fn demosaic_edge_directed(raw: &ImagePlane) -> ColorImage {
    let (w, h) = raw.dims();
    let r = Raw { p: raw };
    let mut green = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = r.at(x, y);
            green[y as usize * w + x as usize] = match cfa_color(x as usize, y as usize) {
                CfaColor::Green => c,
                _ => {
                    let lap_h = 2.0 * c - r.at(x - 2, y) - r.at(x + 2, y);
                    let lap_v = 2.0 * c - r.at(x, y - 2) - r.at(x, y + 2);
                    let dh = (r.at(x - 1, y) - r.at(x + 1, y)).abs() + lap_h.abs();
                    let dv = (r.at(x, y - 1) - r.at(x, y + 1)).abs() + lap_v.abs();
                    let gh = (r.at(x - 1, y) + r.at(x + 1, y)) / 2.0 + lap_h / 4.0;
                    let gv = (r.at(x, y - 1) + r.at(x, y + 1)) / 2.0 + lap_v / 4.0;
                    if dh < dv {
                        gh
                    } else if dv < dh {
                        gv
                    } else {
                        (gh + gv) / 2.0
                    }
                }
            };
        }
    }
    let gplane = ImagePlane::from_raw(w, h, green);
    let g = Raw { p: &gplane };
    // colour difference (raw - green) at a native site, mirrored at edges
    let diff = |x: isize, y: isize| r.at(x, y) - g.at(x, y);
    build(w, h, |x, y| {
        let gv = g.at(x, y);
        let horiz = (diff(x - 1, y) + diff(x + 1, y)) / 2.0;
        let vert = (diff(x, y - 1) + diff(x, y + 1)) / 2.0;
        let diag =
            (diff(x - 1, y - 1) + diff(x + 1, y - 1) + diff(x - 1, y + 1) + diff(x + 1, y + 1)) / 4.0;
        let own = diff(x, y);
        let (dr, db) = match cfa_color(x as usize, y as usize) {
            CfaColor::Red => (own, diag),
            CfaColor::Blue => (diag, own),
            CfaColor::Green if y % 2 == 0 => (horiz, vert),
            CfaColor::Green => (vert, horiz),
        };
        [gv + dr, gv, gv + db]
    })
}
