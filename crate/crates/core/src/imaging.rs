//! Pixel containers, Netpbm I/O, luminance conversion, cropping and tiling.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma weights for R, G and B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Single-channel row-major grid of finite samples.
///
/// Intensities are nominally in `[0, 1]`; residuals and fingerprints reuse
/// the type and may be negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("zero-sized plane {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite sample at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant plane.
    ///
    /// # Panics
    /// If either dimension is zero or `value` is not finite.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a plane from `f(x, y)`.
    ///
    /// # Panics
    /// If either dimension is zero or `f` yields a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite sample at ({x}, {y})");
                data.push(v);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps a buffer produced by internal arithmetic on finite inputs.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f` to every sample.
    ///
    /// # Panics
    /// If `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced non-finite sample");
        Self::from_raw(self.width, self.height, data)
    }

    /// Combines two planes sample by sample.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ImagePlane::new(self.width, self.height, data)
    }

    pub fn ensure_same_dims(&self, other: &ImagePlane) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Circular shift: the sample at `(x, y)` moves to `(x + dx, y + dy)` modulo the dimensions.
    pub fn circular_shift(&self, dx: isize, dy: isize) -> Self {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![0.0; self.data.len()];
        for y in 0..h {
            let ty = (y + dy).rem_euclid(h) as usize;
            for x in 0..w {
                let tx = (x + dx).rem_euclid(w) as usize;
                out[ty * self.width + tx] = self.data[(y * w + x) as usize];
            }
        }
        Self::from_raw(self.width, self.height, out)
    }
}

/// Three planes of identical dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    channels: [ImagePlane; 3],
}

impl ColorImage {
    pub fn new(r: ImagePlane, g: ImagePlane, b: ImagePlane) -> Result<Self> {
        r.ensure_same_dims(&g)?;
        r.ensure_same_dims(&b)?;
        Ok(Self { channels: [r, g, b] })
    }

    pub fn gray(plane: ImagePlane) -> Self {
        Self {
            channels: [plane.clone(), plane.clone(), plane],
        }
    }

    pub fn r(&self) -> &ImagePlane {
        &self.channels[0]
    }

    pub fn g(&self) -> &ImagePlane {
        &self.channels[1]
    }

    pub fn b(&self) -> &ImagePlane {
        &self.channels[2]
    }

    pub fn channels(&self) -> &[ImagePlane; 3] {
        &self.channels
    }

    pub fn into_channels(self) -> [ImagePlane; 3] {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn map_channels(&self, f: impl Fn(&ImagePlane) -> ImagePlane) -> Self {
        let [r, g, b] = &self.channels;
        Self {
            channels: [f(r), f(g), f(b)],
        }
    }
}

/// Luminance with BT.601 weights.
pub fn to_luminance(img: &ColorImage) -> ImagePlane {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .r()
        .data()
        .iter()
        .zip(img.g().data())
        .zip(img.b().data())
        .map(|((r, g), b)| wr * r + wg * g + wb * b)
        .collect();
    ImagePlane::from_raw(img.width(), img.height(), data)
}

/// Copies the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
pub fn crop(plane: &ImagePlane, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImagePlane> {
    if w == 0 || h == 0 || x0 + w > plane.width() || y0 + h > plane.height() {
        return Err(Error::Bounds(format!(
            "rectangle ({x0}, {y0}, {w}, {h}) outside {}x{} plane",
            plane.width(),
            plane.height()
        )));
    }
    let mut data = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        data.extend_from_slice(&plane.row(y)[x0..x0 + w]);
    }
    Ok(ImagePlane::from_raw(w, h, data))
}

pub fn crop_color(img: &ColorImage, x0: usize, y0: usize, w: usize, h: usize) -> Result<ColorImage> {
    let [r, g, b] = img.channels();
    ColorImage::new(
        crop(r, x0, y0, w, h)?,
        crop(g, x0, y0, w, h)?,
        crop(b, x0, y0, w, h)?,
    )
}

/// One tile of a [`PatchGrid`] with its top-left corner in the source plane.
#[derive(Clone, Debug)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub plane: ImagePlane,
}

/// Non-overlapping square tiles anchored at `(0, 0)`.
#[derive(Clone, Debug)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub patches: Vec<Patch>,
}

/// Origins of the tiles [`tile_patches`] would produce, row-major.
pub fn patch_origins(width: usize, height: usize, patch_size: usize) -> Vec<(usize, usize)> {
    if patch_size == 0 {
        return Vec::new();
    }
    let (rows, cols) = (height / patch_size, width / patch_size);
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c * patch_size, r * patch_size)))
        .collect()
}

/// Splits `plane` into `patch_size` squares; trailing remainders are dropped.
pub fn tile_patches(plane: &ImagePlane, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::Argument("patch size must be at least 1".into()));
    }
    if patch_size > plane.width().min(plane.height()) {
        return Err(Error::Size(format!(
            "patch size {patch_size} leaves no tiles in a {}x{} plane",
            plane.width(),
            plane.height()
        )));
    }
    let patches = patch_origins(plane.width(), plane.height(), patch_size)
        .into_iter()
        .map(|(x, y)| {
            let plane = crop(plane, x, y, patch_size, patch_size)?;
            Ok(Patch { x, y, plane })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchGrid {
        patch_size,
        rows: plane.height() / patch_size,
        cols: plane.width() / patch_size,
        patches,
    })
}

// --- Netpbm I/O -----------------------------------------------------------

struct Netpbm {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

fn parse_netpbm(bytes: &[u8]) -> Result<Netpbm> {
    let magic = bytes.get(..2).ok_or_else(|| Error::Format("empty file".into()))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::Format("not a binary PGM (P5) or PPM (P6) file".into())),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or_default();
        *field = text
            .parse()
            .map_err(|_| Error::Format(format!("bad header field at byte {start}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("zero-dimension image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing raster separator".into()));
    }
    pos += 1;
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let n = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < n * bytes_per_sample {
        return Err(Error::Format(format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            n * bytes_per_sample
        )));
    }
    let samples: Vec<u32> = if bytes_per_sample == 1 {
        raster[..n].iter().map(|&b| b as u32).collect()
    } else {
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s > maxval as u32) {
        return Err(Error::Format(format!("sample {s} exceeds maxval {maxval}")));
    }
    Ok(Netpbm {
        channels,
        width,
        height,
        maxval: maxval as u32,
        samples,
    })
}

/// Decodes a binary PGM or PPM, scaling samples by the header maxval.
///
/// Grayscale files come back with the plane replicated into all channels.
pub fn decode_image(bytes: &[u8]) -> Result<ColorImage> {
    let img = parse_netpbm(bytes)?;
    let scale = img.maxval as f64;
    let plane = |c: usize| {
        let data = img
            .samples
            .iter()
            .skip(c)
            .step_by(img.channels)
            .map(|&s| s as f64 / scale)
            .collect();
        ImagePlane::from_raw(img.width, img.height, data)
    };
    if img.channels == 1 {
        Ok(ColorImage::gray(plane(0)))
    } else {
        ColorImage::new(plane(0), plane(1), plane(2))
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads an image and reduces it to luminance.
pub fn load_luminance(path: impl AsRef<Path>) -> Result<ImagePlane> {
    load_image(path).map(|img| to_luminance(&img))
}

/// Sample depth for Netpbm output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

fn quantize(v: f64, maxval: u32) -> u32 {
    // round half up, clamped to the representable range
    (v.clamp(0.0, 1.0) * maxval as f64 + 0.5).floor() as u32
}

fn encode_netpbm(planes: &[&ImagePlane], depth: BitDepth) -> Vec<u8> {
    let (w, h) = planes[0].dims();
    let magic = if planes.len() == 1 { "P5" } else { "P6" };
    let maxval = depth.maxval();
    let mut out = format!("{magic}\n{w} {h}\n{maxval}\n").into_bytes();
    for i in 0..w * h {
        for p in planes {
            let q = quantize(p.data()[i], maxval);
            match depth {
                BitDepth::Eight => out.push(q as u8),
                BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
            }
        }
    }
    out
}

pub fn encode_pgm(plane: &ImagePlane, depth: BitDepth) -> Vec<u8> {
    encode_netpbm(&[plane], depth)
}

pub fn encode_ppm(img: &ColorImage, depth: BitDepth) -> Vec<u8> {
    let [r, g, b] = img.channels();
    encode_netpbm(&[r, g, b], depth)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes a PGM; samples are clamped to `[0, 1]` and rounded half up.
pub fn save_pgm(plane: &ImagePlane, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(plane, depth))
}

pub fn save_ppm(img: &ColorImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    write_file(path.as_ref(), &encode_ppm(img, depth))
}
