//! Noise residuals and maximum-likelihood PRNU fingerprint estimation.
//!
//! For images `I_i` with residuals `R_i = I_i - D(I_i)` the fingerprint is
//! the per-pixel ratio `k = sum(R_i * I_i) / sum(I_i^2)`. Both sums are
//! accumulated over a fixed pairwise tree so the result does not depend on
//! how the work is scheduled.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::denoise::DenoiserSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::imaging::ImagePlane;
use crate::spectral;

/// Samples at or above this level are treated as saturated.
pub const SATURATION_LEVEL: f64 = 254.0 / 255.0;

const MAGIC: &[u8] = b"PRNU1\n";
const HEADER_END: &str = "--";

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseResidual {
    pub plane: ImagePlane,
    pub source_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    pub plane: ImagePlane,
    pub camera_id: String,
    pub pipeline_id: String,
    pub n_sources: usize,
}

impl Fingerprint {
    pub fn new(
        plane: ImagePlane,
        camera_id: impl Into<String>,
        pipeline_id: impl Into<String>,
        n_sources: usize,
    ) -> Result<Self> {
        if n_sources == 0 {
            return Err(Error::Argument("a fingerprint needs at least one source".into()));
        }
        Ok(Self {
            plane,
            camera_id: camera_id.into(),
            pipeline_id: pipeline_id.into(),
            n_sources,
        })
    }

    pub fn labeled(mut self, camera_id: impl Into<String>, pipeline_id: impl Into<String>) -> Self {
        self.camera_id = camera_id.into();
        self.pipeline_id = pipeline_id.into();
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plane.dims()
    }
}

/// `R = I - D(I)`.
pub fn residual(image: &ImagePlane, denoiser: &DenoiserSpec) -> Result<NoiseResidual> {
    residual_with_id(image, denoiser, "")
}

pub fn residual_with_id(
    image: &ImagePlane,
    denoiser: &DenoiserSpec,
    source_id: impl Into<String>,
) -> Result<NoiseResidual> {
    let denoised = denoiser.apply(image)?;
    let data = image
        .data()
        .iter()
        .zip(denoised.data())
        .map(|(i, d)| i - d)
        .collect();
    Ok(NoiseResidual {
        plane: ImagePlane::new(image.width(), image.height(), data)?,
        source_id: source_id.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateOptions {
    /// Per-image samples at or above this level are left out of both sums.
    pub saturation_level: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            saturation_level: Some(SATURATION_LEVEL),
        }
    }
}

/// Maximum-likelihood estimate with default options.
pub fn estimate_fingerprint(
    images: &[ImagePlane],
    residuals: &[NoiseResidual],
) -> Result<Fingerprint> {
    estimate_fingerprint_with(images, residuals, &EstimateOptions::default())
}

pub fn estimate_fingerprint_with(
    images: &[ImagePlane],
    residuals: &[NoiseResidual],
    opts: &EstimateOptions,
) -> Result<Fingerprint> {
    if images.is_empty() {
        return Err(Error::Argument("no images to estimate from".into()));
    }
    if images.len() != residuals.len() {
        return Err(Error::Argument(format!(
            "{} images but {} residuals",
            images.len(),
            residuals.len()
        )));
    }
    let dims = images[0].dims();
    for (i, (img, res)) in images.iter().zip(residuals).enumerate() {
        if img.dims() != dims || res.plane.dims() != dims {
            return Err(Error::Shape(format!(
                "source {i} is {}x{} (residual {}x{}), expected {}x{}",
                img.width(),
                img.height(),
                res.plane.width(),
                res.plane.height(),
                dims.0,
                dims.1
            )));
        }
    }
    let (num, den) = accumulate(0, images.len(), &|i| {
        contribution(&images[i], &residuals[i].plane, opts)
    });
    let k = ratio(&num, &den);
    Fingerprint::new(
        ImagePlane::new(dims.0, dims.1, k)?,
        "",
        "",
        images.len(),
    )
}

type Sums = (Vec<f64>, Vec<f64>);

fn contribution(image: &ImagePlane, residual: &ImagePlane, opts: &EstimateOptions) -> Sums {
    let sat = opts.saturation_level.unwrap_or(f64::INFINITY);
    image
        .data()
        .iter()
        .zip(residual.data())
        .map(|(&i, &r)| if i >= sat { (0.0, 0.0) } else { (r * i, i * i) })
        .unzip()
}

/// Sums contributions of `lo..hi` over a balanced binary tree.
fn accumulate<F>(lo: usize, hi: usize, leaf: &F) -> Sums
where
    F: Fn(usize) -> Sums + Sync,
{
    if hi - lo == 1 {
        return leaf(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (mut a, b) = exec::join(|| accumulate(lo, mid, leaf), || accumulate(mid, hi, leaf));
    add_into(&mut a.0, &b.0);
    add_into(&mut a.1, &b.1);
    a
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    acc.iter_mut().zip(other).for_each(|(a, b)| *a += b);
}

fn ratio(num: &[f64], den: &[f64]) -> Vec<f64> {
    num.iter()
        .zip(den)
        .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 })
        .collect()
}

/// Running estimator sums, for callers that stream sources instead of holding
/// them all in memory. Merging is plain addition, so a fixed merge order gives
/// reproducible results.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    width: usize,
    height: usize,
    num: Vec<f64>,
    den: Vec<f64>,
    count: usize,
}

impl Accumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            num: vec![0.0; width * height],
            den: vec![0.0; width * height],
            count: 0,
        }
    }

    /// Accumulator holding a single source.
    pub fn single(image: &ImagePlane, residual: &NoiseResidual, opts: &EstimateOptions) -> Result<Self> {
        image.ensure_same_dims(&residual.plane)?;
        let (num, den) = contribution(image, &residual.plane, opts);
        Ok(Self {
            width: image.width(),
            height: image.height(),
            num,
            den,
            count: 1,
        })
    }

    pub fn add(&mut self, image: &ImagePlane, residual: &NoiseResidual, opts: &EstimateOptions) -> Result<()> {
        self.merge(&Self::single(image, residual, opts)?)
    }

    pub fn merge(&mut self, other: &Accumulator) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Shape(format!(
                "cannot merge {}x{} sums into {}x{}",
                other.width, other.height, self.width, self.height
            )));
        }
        add_into(&mut self.num, &other.num);
        add_into(&mut self.den, &other.den);
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn finish(&self) -> Result<Fingerprint> {
        let k = ImagePlane::new(self.width, self.height, ratio(&self.num, &self.den))?;
        Fingerprint::new(k, "", "", self.count)
    }
}

/// Removes row means, then column means.
pub fn clean_fingerprint(fp: &Fingerprint) -> Fingerprint {
    let (w, h) = fp.dims();
    let mut data = fp.plane.data().to_vec();
    for row in data.chunks_exact_mut(w) {
        let m = row.iter().sum::<f64>() / w as f64;
        row.iter_mut().for_each(|v| *v -= m);
    }
    let mut col_means = vec![0.0; w];
    for row in data.chunks_exact(w) {
        add_into(&mut col_means, row);
    }
    col_means.iter_mut().for_each(|m| *m /= h as f64);
    for row in data.chunks_exact_mut(w) {
        row.iter_mut().zip(&col_means).for_each(|(v, m)| *v -= m);
    }
    Fingerprint {
        plane: ImagePlane::from_raw(w, h, data),
        ..fp.clone()
    }
}

/// Suppresses peaks in the fingerprint's magnitude spectrum with a local
/// Wiener filter, keeping the phase. Off by default in the toolkit.
pub fn whiten_fingerprint(fp: &Fingerprint) -> Fingerprint {
    let (w, h) = fp.dims();
    let n = (w * h) as f64;
    let sigma2 = fp.plane.variance();
    let mut spec = spectral::to_complex(fp.plane.data());
    spectral::fft2(&mut spec, w, h, false);
    if sigma2 > 0.0 {
        let mag: Vec<f64> = spec.iter().map(|c| c.norm() / n.sqrt()).collect();
        let noise_part = local_wiener_noise(&mag, w, h, sigma2);
        for ((c, &m), &m1) in spec.iter_mut().zip(&mag).zip(&noise_part) {
            *c = if m > 0.0 { *c * (m1 / m) } else { Complex64::new(0.0, 0.0) };
        }
    }
    spectral::fft2(&mut spec, w, h, true);
    let data = spec.iter().map(|c| c.re / n).collect();
    Fingerprint {
        plane: ImagePlane::from_raw(w, h, data),
        ..fp.clone()
    }
}

/// Part of `coef` attributed to noise of variance `noise` by a local Wiener
/// filter with windows 3..9.
fn local_wiener_noise(coef: &[f64], w: usize, h: usize, noise: f64) -> Vec<f64> {
    let iw = w + 1;
    let mut integral = vec![0.0; iw * (h + 1)];
    for y in 0..h {
        let mut run = 0.0;
        for x in 0..w {
            run += coef[y * w + x] * coef[y * w + x];
            integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + run;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for r in [1usize, 2, 3, 4] {
                let (xa, xb) = (x.saturating_sub(r), (x + r + 1).min(w));
                let (ya, yb) = (y.saturating_sub(r), (y + r + 1).min(h));
                let s = integral[yb * iw + xb] - integral[ya * iw + xb] - integral[yb * iw + xa]
                    + integral[ya * iw + xa];
                let mean = s / ((xb - xa) * (yb - ya)) as f64;
                best = best.min((mean - noise).max(0.0));
            }
            out[y * w + x] = coef[y * w + x] * noise / (best + noise);
        }
    }
    out
}

// --- file format ------------------------------------------------------------

pub fn encode_fingerprint(fp: &Fingerprint) -> Result<Vec<u8>> {
    for (name, id) in [("camera", &fp.camera_id), ("pipeline", &fp.pipeline_id)] {
        if id.contains('\n') || id.contains('\r') {
            return Err(Error::Argument(format!("{name} id contains a line break")));
        }
    }
    let (w, h) = fp.dims();
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(
        format!(
            "width={w}\nheight={h}\ncamera={}\npipeline={}\nn={}\n{HEADER_END}\n",
            fp.camera_id, fp.pipeline_id, fp.n_sources
        )
        .as_bytes(),
    );
    out.reserve(w * h * 8);
    for v in fp.plane.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fingerprint(bytes: &[u8]) -> Result<Fingerprint> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format("missing PRNU1 magic".into()))?;
    let mut pos = 0;
    let (mut width, mut height, mut camera, mut pipeline, mut n) = (None, None, None, None, None);
    loop {
        let end = rest[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let line = std::str::from_utf8(&rest[pos..pos + end])
            .map_err(|_| Error::Format("header is not UTF-8".into()))?;
        pos += end + 1;
        if line == HEADER_END {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad {key} value {value:?}")))
        };
        match key {
            "width" => width = Some(number()?),
            "height" => height = Some(number()?),
            "camera" => camera = Some(value.to_string()),
            "pipeline" => pipeline = Some(value.to_string()),
            "n" => n = Some(number()?),
            _ => return Err(Error::Format(format!("unknown header key {key:?}"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header lacks {k}"));
    let width = width.ok_or_else(|| missing("width"))?;
    let height = height.ok_or_else(|| missing("height"))?;
    let camera = camera.ok_or_else(|| missing("camera"))?;
    let pipeline = pipeline.ok_or_else(|| missing("pipeline"))?;
    let n = n.ok_or_else(|| missing("n"))?;
    let payload = &rest[pos..];
    let expected = width
        .checked_mul(height)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let plane = ImagePlane::new(width, height, data).map_err(|e| Error::Format(e.to_string()))?;
    Fingerprint::new(plane, camera, pipeline, n).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_fingerprint(fp: &Fingerprint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fingerprint(fp)?).map_err(|e| Error::io(path, e))
}

pub fn load_fingerprint(path: impl AsRef<Path>) -> Result<Fingerprint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fingerprint(&bytes)
}
