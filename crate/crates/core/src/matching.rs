//! Fingerprint similarity and detection statistics.
//!
//! Correlation surfaces are circular and computed in the frequency domain.
//! The peak-to-correlation-energy ratio (PCE) divides the squared peak by the
//! mean squared surface value outside a square neighbourhood of the peak.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, NoiseResidual};
use crate::imaging::{crop, ImagePlane};
use crate::spectral;

/// Half-width of the square excluded around the peak (11 x 11).
pub const DEFAULT_EXCLUSION_RADIUS: usize = 5;

/// Customary decision threshold on PCE.
pub const PCE_THRESHOLD: f64 = 50.0;

/// Pearson correlation of two equally sized planes.
pub fn ncc(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.ensure_same_dims(b)?;
    ncc_slices(a.data(), b.data())
}

pub(crate) fn ncc_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("correlation with a constant plane".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Circular cross-correlation indexed by shift.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSurface {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl CorrelationSurface {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} surface",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn area(&self) -> usize {
        self.values.len()
    }

    /// Value at a signed shift, wrapped circularly.
    pub fn at(&self, sx: isize, sy: isize) -> f64 {
        let x = sx.rem_euclid(self.width as isize) as usize;
        let y = sy.rem_euclid(self.height as isize) as usize;
        self.values[y * self.width + x]
    }

    /// Scales every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    fn signed(&self, x: usize, y: usize) -> (isize, isize) {
        (wrap_signed(x, self.width), wrap_signed(y, self.height))
    }
}

fn wrap_signed(i: usize, n: usize) -> isize {
    if i > n / 2 {
        i as isize - n as isize
    } else {
        i as isize
    }
}

/// `surface(s) = sum_x a~(x) * b~(x + s)` over mean-removed planes.
pub fn cross_correlate(a: &ImagePlane, b: &ImagePlane) -> Result<CorrelationSurface> {
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    let n = w * h;
    let (ma, mb) = (a.mean(), b.mean());
    if a.data().iter().all(|&v| v == ma) || b.data().iter().all(|&v| v == mb) {
        return CorrelationSurface::new(w, h, vec![0.0; n]);
    }
    // pack both real inputs into one complex transform
    let mut z: Vec<Complex64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| Complex64::new(x - ma, y - mb))
        .collect();
    spectral::fft2(&mut z, w, h, false);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for fy in 0..h {
        let ny = (h - fy) % h;
        for fx in 0..w {
            let nx = (w - fx) % w;
            let zf = z[fy * w + fx];
            let zc = z[ny * w + nx].conj();
            let af = (zf + zc) * 0.5;
            let bf = (zf - zc) * Complex64::new(0.0, -0.5);
            prod[fy * w + fx] = af.conj() * bf;
        }
    }
    spectral::fft2(&mut prod, w, h, true);
    let values = prod.iter().map(|c| c.re / n as f64).collect();
    CorrelationSurface::new(w, h, values)
}

/// One detection decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PceScore {
    /// Signed: carries the sign of the peak.
    pub pce: f64,
    pub peak_value: f64,
    /// Signed circular shift of the peak.
    pub peak_location: (isize, isize),
    pub p_value: f64,
}

/// PCE at the largest-magnitude entry of the surface.
pub fn pce(surface: &CorrelationSurface, exclusion_radius: usize) -> Result<PceScore> {
    let (idx, _) = surface
        .values
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, &v)| {
            if v.abs() > bv {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        });
    let (sx, sy) = surface.signed(idx % surface.width, idx / surface.width);
    pce_at(surface, (sx, sy), exclusion_radius)
}

/// PCE with the peak pinned at the given shift.
pub fn pce_at(
    surface: &CorrelationSurface,
    shift: (isize, isize),
    exclusion_radius: usize,
) -> Result<PceScore> {
    let (w, h) = (surface.width, surface.height);
    let side = 2 * exclusion_radius + 1;
    if w * h <= side * side {
        return Err(Error::Argument(format!(
            "{w}x{h} surface is not larger than the {side}x{side} exclusion area"
        )));
    }
    let r = exclusion_radius as isize;
    let peak = surface.at(shift.0, shift.1);
    let mut excluded = vec![false; w * h];
    for dy in -r..=r {
        for dx in -r..=r {
            let x = (shift.0 + dx).rem_euclid(w as isize) as usize;
            let y = (shift.1 + dy).rem_euclid(h as isize) as usize;
            excluded[y * w + x] = true;
        }
    }
    let (mut energy, mut count) = (0.0, 0usize);
    for (v, ex) in surface.values.iter().zip(&excluded) {
        if !ex {
            energy += v * v;
            count += 1;
        }
    }
    let energy = energy / count as f64;
    if energy == 0.0 {
        return Err(Error::Degenerate("surface has no off-peak energy".into()));
    }
    let pce = peak.signum() * peak * peak / energy;
    Ok(PceScore {
        pce,
        peak_value: peak,
        peak_location: shift,
        p_value: p_value(pce, w * h),
    })
}

/// One-sided tail probability of a PCE value when the normalized peak is
/// standard normal: `0.5 * erfc(sqrt(max(pce, 0) / 2))`.
pub fn p_value(pce: f64, surface_area: usize) -> f64 {
    debug_assert!(surface_area > 1);
    let z = pce.max(0.0).sqrt();
    (0.5 * libm::erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

/// Result of [`align`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Translation of `b`'s content relative to `a`: `b(x + shift) ~ a(x)`.
    pub dx: isize,
    pub dy: isize,
    /// NCC over the overlap after applying the shift.
    pub ncc: f64,
}

/// Finds the shift within `±max_shift` that maximizes the cross-correlation of
/// two fingerprints and reports the NCC of the overlapping regions.
///
/// Ties go to the smallest `|dx| + |dy|`, then to row-major order.
pub fn align(fa: &Fingerprint, fb: &Fingerprint, max_shift: usize) -> Result<Alignment> {
    align_planes(&fa.plane, &fb.plane, max_shift)
}

pub fn align_planes(a: &ImagePlane, b: &ImagePlane, max_shift: usize) -> Result<Alignment> {
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    if 2 * max_shift >= w.min(h) {
        return Err(Error::Argument(format!(
            "max shift {max_shift} must be below half of {}",
            w.min(h)
        )));
    }
    let surface = cross_correlate(a, b)?;
    let m = max_shift as isize;
    let mut best: Option<(f64, isize, isize)> = None;
    for dy in -m..=m {
        for dx in -m..=m {
            let v = surface.at(dx, dy);
            let better = match best {
                None => true,
                Some((bv, bx, by)) => {
                    v > bv || (v == bv && dx.abs() + dy.abs() < bx.abs() + by.abs())
                }
            };
            if better {
                best = Some((v, dx, dy));
            }
        }
    }
    let (_, dx, dy) = best.expect("search window is non-empty");
    Ok(Alignment {
        dx,
        dy,
        ncc: overlap_ncc(a, b, dx, dy)?,
    })
}

/// NCC between `a(x)` and `b(x + (dx, dy))` over positions where both exist.
pub fn overlap_ncc(a: &ImagePlane, b: &ImagePlane, dx: isize, dy: isize) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (w, h) = (a.width() as isize, a.height() as isize);
    let (ax0, ax1) = (0.max(-dx), w.min(w - dx));
    let (ay0, ay1) = (0.max(-dy), h.min(h - dy));
    if ax1 <= ax0 || ay1 <= ay0 {
        return Err(Error::Argument(format!("shift ({dx}, {dy}) leaves no overlap")));
    }
    let (ow, oh) = ((ax1 - ax0) as usize, (ay1 - ay0) as usize);
    let pa = crop(a, ax0 as usize, ay0 as usize, ow, oh)?;
    let pb = crop(b, (ax0 + dx) as usize, (ay0 + dy) as usize, ow, oh)?;
    ncc(&pa, &pb)
}

/// Correlates a test residual patch with `test_image * k` over the same
/// square and scores the full surface.
pub fn match_patch(
    test_image: &ImagePlane,
    test_residual: &NoiseResidual,
    fp: &Fingerprint,
    origin: (usize, usize),
    patch_size: usize,
) -> Result<PceScore> {
    let surface = patch_surface(test_image, test_residual, fp, origin, patch_size)?;
    pce(&surface, DEFAULT_EXCLUSION_RADIUS)
}

/// Score of one square patch, or of the whole image when `size` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchScore {
    pub x: usize,
    pub y: usize,
    pub size: Option<usize>,
    pub score: PceScore,
}

/// Matches a test image against a fingerprint of the same dimensions, either
/// as a whole or tiled into non-overlapping `patch_size` squares.
pub fn match_image(
    test_image: &ImagePlane,
    test_residual: &NoiseResidual,
    fp: &Fingerprint,
    patch_size: Option<usize>,
) -> Result<Vec<PatchScore>> {
    test_image.ensure_same_dims(&test_residual.plane)?;
    test_image.ensure_same_dims(&fp.plane)?;
    match patch_size {
        None => {
            let signal = test_image.zip_map(&fp.plane, |i, k| i * k)?;
            let surface = cross_correlate(&test_residual.plane, &signal)?;
            Ok(vec![PatchScore {
                x: 0,
                y: 0,
                size: None,
                score: pce(&surface, DEFAULT_EXCLUSION_RADIUS)?,
            }])
        }
        Some(size) => {
            let (w, h) = test_image.dims();
            if size == 0 || size > w.min(h) {
                return Err(Error::Size(format!("{size}px patches do not fit a {w}x{h} image")));
            }
            crate::imaging::patch_origins(w, h, size)
                .into_iter()
                .map(|(x, y)| {
                    Ok(PatchScore {
                        x,
                        y,
                        size: Some(size),
                        score: match_patch(test_image, test_residual, fp, (x, y), size)?,
                    })
                })
                .collect()
        }
    }
}

pub(crate) fn patch_surface(
    test_image: &ImagePlane,
    test_residual: &NoiseResidual,
    fp: &Fingerprint,
    origin: (usize, usize),
    patch_size: usize,
) -> Result<CorrelationSurface> {
    test_image.ensure_same_dims(&test_residual.plane)?;
    let (x, y) = origin;
    for (what, (w, h)) in [("fingerprint", fp.dims()), ("test image", test_image.dims())] {
        if patch_size == 0 || x + patch_size > w || y + patch_size > h {
            return Err(Error::Bounds(format!(
                "{patch_size}px patch at ({x}, {y}) does not fit the {w}x{h} {what}"
            )));
        }
    }
    let img = crop(test_image, x, y, patch_size, patch_size)?;
    let res = crop(&test_residual.plane, x, y, patch_size, patch_size)?;
    let k = crop(&fp.plane, x, y, patch_size, patch_size)?;
    let signal = img.zip_map(&k, |i, k| i * k)?;
    cross_correlate(&res, &signal)
}
