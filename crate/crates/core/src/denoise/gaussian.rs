use super::reflect;
use crate::error::Result;
use crate::imaging::ImagePlane;

/// Sampled 1-D Gaussian truncated at `ceil(3 sigma)` and normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with symmetric reflection at the edges.
pub fn gaussian_denoise(plane: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
    let spec = super::DenoiserSpec::Gaussian { sigma };
    spec.validate()?;
    let kernel = gaussian_kernel(sigma);
    Ok(separable_convolve(plane, &kernel))
}

pub(crate) fn separable_convolve(plane: &ImagePlane, kernel: &[f64]) -> ImagePlane {
    let (w, h) = plane.dims();
    let r = (kernel.len() / 2) as isize;
    let src = plane.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + t as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for (t, &kv) in kernel.iter().enumerate() {
        for y in 0..h {
            let sy = reflect(y as isize + t as isize - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    ImagePlane::from_raw(w, h, out)
}
