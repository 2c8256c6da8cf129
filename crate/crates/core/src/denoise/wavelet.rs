//! Four-level orthogonal wavelet decomposition with local Wiener shrinkage
//! of the detail subbands.
//!
//! The plane is symmetrically extended by at least [`MARGIN`] pixels on each
//! side up to a multiple of `2^levels`, transformed with a periodized
//! 8-tap Daubechies filter bank, and cropped back after reconstruction.

use super::reflect;
use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

pub const WAVELET_LEVELS: usize = 4;
pub const WAVELET_MIN_SIZE: usize = 16;

const MARGIN: usize = 16;
const WINDOWS: [usize; 4] = [3, 5, 7, 9];

/// Daubechies scaling filter with 8 taps (4 vanishing moments).
const LOWPASS: [f64; 8] = [
    0.230_377_813_308_896_4,
    0.714_846_570_552_915_4,
    0.630_880_767_929_858_7,
    -0.027_983_769_416_859_9,
    -0.187_034_811_719_093_1,
    0.030_841_381_835_560_7,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_0,
];

fn highpass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (n, v) in g.iter_mut().enumerate() {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        *v = sign * LOWPASS[7 - n];
    }
    g
}

/// Denoises `plane`; the residual `plane - output` holds what the filter removed.
pub fn wavelet_denoise(plane: &ImagePlane, noise_variance: f64) -> Result<ImagePlane> {
    if !(noise_variance.is_finite() && noise_variance > 0.0) {
        return Err(Error::Config(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    let (w, h) = plane.dims();
    if w < WAVELET_MIN_SIZE || h < WAVELET_MIN_SIZE {
        return Err(Error::Size(format!(
            "wavelet denoising needs at least {WAVELET_MIN_SIZE}x{WAVELET_MIN_SIZE}, got {w}x{h}"
        )));
    }
    let block = 1 << WAVELET_LEVELS;
    let pw = (w + 2 * MARGIN).div_ceil(block) * block;
    let ph = (h + 2 * MARGIN).div_ceil(block) * block;
    let (left, top) = ((pw - w) / 2, (ph - h) / 2);

    let src = plane.data();
    let mut buf = vec![0.0; pw * ph];
    for y in 0..ph {
        let sy = reflect(y as isize - top as isize, h);
        for x in 0..pw {
            let sx = reflect(x as isize - left as isize, w);
            buf[y * pw + x] = src[sy * w + sx];
        }
    }

    let g = highpass();
    let mut scratch = Vec::new();
    let (mut cw, mut ch) = (pw, ph);
    for _ in 0..WAVELET_LEVELS {
        transform_region(&mut buf, pw, cw, ch, &mut scratch, |x, out| {
            analyze(x, out, &LOWPASS, &g)
        });
        cw /= 2;
        ch /= 2;
    }

    let mut sq = Vec::new();
    let (mut sw, mut sh) = (pw, ph);
    for _ in 0..WAVELET_LEVELS {
        sw /= 2;
        sh /= 2;
        for (x0, y0) in [(sw, 0), (0, sh), (sw, sh)] {
            wiener_shrink(&mut buf, pw, x0, y0, sw, sh, noise_variance, &mut sq);
        }
    }

    let (mut cw, mut ch) = (pw >> (WAVELET_LEVELS - 1), ph >> (WAVELET_LEVELS - 1));
    for _ in 0..WAVELET_LEVELS {
        inverse_region(&mut buf, pw, cw, ch, &mut scratch, |x, out| {
            synthesize(x, out, &LOWPASS, &g)
        });
        cw *= 2;
        ch *= 2;
    }

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let start = (y + top) * pw + left;
        out.extend_from_slice(&buf[start..start + w]);
    }
    Ok(ImagePlane::from_raw(w, h, out))
}

/// Periodized analysis: lowpass half followed by highpass half.
fn analyze(x: &[f64], out: &mut [f64], h: &[f64; 8], g: &[f64; 8]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for t in 0..8 {
            let v = x[(2 * k + t) % n];
            a += h[t] * v;
            d += g[t] * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

fn synthesize(coeffs: &[f64], out: &mut [f64], h: &[f64; 8], g: &[f64; 8]) {
    let n = coeffs.len();
    let half = n / 2;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (coeffs[k], coeffs[half + k]);
        for t in 0..8 {
            out[(2 * k + t) % n] += h[t] * a + g[t] * d;
        }
    }
}

fn transform_region(
    buf: &mut [f64],
    stride: usize,
    cw: usize,
    ch: usize,
    scratch: &mut Vec<f64>,
    f: impl Fn(&[f64], &mut [f64]),
) {
    let mut line = vec![0.0; cw.max(ch)];
    scratch.resize(cw.max(ch), 0.0);
    for y in 0..ch {
        let row = &mut buf[y * stride..y * stride + cw];
        line[..cw].copy_from_slice(row);
        f(&line[..cw], &mut scratch[..cw]);
        row.copy_from_slice(&scratch[..cw]);
    }
    for x in 0..cw {
        for y in 0..ch {
            line[y] = buf[y * stride + x];
        }
        f(&line[..ch], &mut scratch[..ch]);
        for y in 0..ch {
            buf[y * stride + x] = scratch[y];
        }
    }
}

fn inverse_region(
    buf: &mut [f64],
    stride: usize,
    cw: usize,
    ch: usize,
    scratch: &mut Vec<f64>,
    f: impl Fn(&[f64], &mut [f64]),
) {
    let mut line = vec![0.0; cw.max(ch)];
    scratch.resize(cw.max(ch), 0.0);
    for x in 0..cw {
        for y in 0..ch {
            line[y] = buf[y * stride + x];
        }
        f(&line[..ch], &mut scratch[..ch]);
        for y in 0..ch {
            buf[y * stride + x] = scratch[y];
        }
    }
    for y in 0..ch {
        let row = &mut buf[y * stride..y * stride + cw];
        line[..cw].copy_from_slice(row);
        f(&line[..cw], &mut scratch[..cw]);
        row.copy_from_slice(&scratch[..cw]);
    }
}

/// Scales each coefficient by `s2 / (s2 + noise)`, where `s2` is the smallest
/// local signal-variance estimate over the square windows in [`WINDOWS`].
#[allow(clippy::too_many_arguments)]
fn wiener_shrink(
    buf: &mut [f64],
    stride: usize,
    x0: usize,
    y0: usize,
    sw: usize,
    sh: usize,
    noise: f64,
    integral: &mut Vec<f64>,
) {
    // integral image of squared coefficients, (sw + 1) x (sh + 1)
    let iw = sw + 1;
    integral.clear();
    integral.resize(iw * (sh + 1), 0.0);
    for y in 0..sh {
        let mut run = 0.0;
        for x in 0..sw {
            let c = buf[(y0 + y) * stride + x0 + x];
            run += c * c;
            integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + run;
        }
    }
    for y in 0..sh {
        for x in 0..sw {
            let mut best = f64::INFINITY;
            for &win in &WINDOWS {
                let r = win / 2;
                let (xa, xb) = (x.saturating_sub(r), (x + r + 1).min(sw));
                let (ya, yb) = (y.saturating_sub(r), (y + r + 1).min(sh));
                let sum = integral[yb * iw + xb] - integral[ya * iw + xb] - integral[yb * iw + xa]
                    + integral[ya * iw + xa];
                let mean = sum / ((xb - xa) * (yb - ya)) as f64;
                best = best.min((mean - noise).max(0.0));
            }
            let c = &mut buf[(y0 + y) * stride + x0 + x];
            *c *= best / (best + noise);
        }
    }
}
