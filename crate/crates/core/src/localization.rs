//! Sliding-window PCE maps and tampering-probability maps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoise::reflect;
use crate::error::{Error, Result};
use crate::exec;
use crate::fingerprint::{Fingerprint, NoiseResidual};
use crate::imaging::{save_pgm, BitDepth, ImagePlane};
use crate::matching::{p_value, patch_surface, pce_at, DEFAULT_EXCLUSION_RADIUS};

pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_STRIDE: usize = 64;

/// Grid of per-window values; entry `(i, j)` covers the window whose top-left
/// corner is `(j * stride, i * stride)` in the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    pub stride: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl HeatMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Image coordinates of the window behind entry `(row, col)`.
    pub fn origin(&self, row: usize, col: usize) -> (usize, usize) {
        (col * self.stride, row * self.stride)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Number of window positions along one axis.
pub fn grid_len(image_dim: usize, window: usize, stride: usize) -> usize {
    (image_dim - window) / stride + 1
}

/// Synchronized PCE of every window: the peak is read at zero shift.
pub fn pce_map(
    image: &ImagePlane,
    residual: &NoiseResidual,
    fp: &Fingerprint,
    window: usize,
    stride: usize,
) -> Result<HeatMap> {
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    if window == 0 || window > image.width().min(image.height()) {
        return Err(Error::Size(format!(
            "window {window} does not fit a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    if image.dims() != fp.dims() {
        return Err(Error::Shape(format!(
            "image {}x{} vs fingerprint {}x{}",
            image.width(),
            image.height(),
            fp.dims().0,
            fp.dims().1
        )));
    }
    let rows = grid_len(image.height(), window, stride);
    let cols = grid_len(image.width(), window, stride);
    let values = exec::try_map_range(rows * cols, |i| {
        let origin = ((i % cols) * stride, (i / cols) * stride);
        let surface = patch_surface(image, residual, fp, origin, window)?;
        Ok::<_, Error>(pce_at(&surface, (0, 0), DEFAULT_EXCLUSION_RADIUS)?.pce)
    })?;
    Ok(HeatMap {
        rows,
        cols,
        window,
        stride,
        values,
    })
}

/// Maps each PCE entry to its p-value under the authentic hypothesis, read as
/// a tampering probability: low PCE gives values near 0.5 and above, high
/// PCE values near 0.
pub fn probability_map(pce_map: &HeatMap) -> HeatMap {
    let area = pce_map.window * pce_map.window;
    HeatMap {
        values: pce_map.values.iter().map(|&v| p_value(v, area.max(2))).collect(),
        ..pce_map.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PostProcess {
    #[default]
    None,
    Median3,
}

/// 3x3 median with symmetric edge reflection.
pub fn median3(map: &HeatMap) -> HeatMap {
    let (rows, cols) = (map.rows, map.cols);
    let mut out = Vec::with_capacity(map.values.len());
    let mut win = [0.0; 9];
    for r in 0..rows {
        for c in 0..cols {
            let mut k = 0;
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let rr = reflect(r as isize + dr, rows);
                    let cc = reflect(c as isize + dc, cols);
                    win[k] = map.values[rr * cols + cc];
                    k += 1;
                }
            }
            win.sort_by(f64::total_cmp);
            out.push(win[4]);
        }
    }
    HeatMap {
        values: out,
        ..map.clone()
    }
}

/// Renders a unit-range map as an 8-bit PGM, one pixel per window.
pub fn render_map(map: &HeatMap, path: impl AsRef<Path>, post: PostProcess) -> Result<()> {
    let map = match post {
        PostProcess::None => map.clone(),
        PostProcess::Median3 => median3(map),
    };
    let plane = ImagePlane::new(map.cols, map.rows, map.values.clone())?;
    save_pgm(&plane, path, BitDepth::Eight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::load_image;

    fn map(rows: usize, cols: usize, values: Vec<f64>) -> HeatMap {
        HeatMap {
            rows,
            cols,
            window: 8,
            stride: 4,
            values,
        }
    }

    #[test]
    fn grid_formula() {
        assert_eq!(grid_len(512, 128, 64), 7);
        assert_eq!(grid_len(300, 128, 64), 3);
        assert_eq!(grid_len(128, 128, 1), 1);
    }

    #[test]
    fn probability_reference_points() {
        let p = probability_map(&map(1, 3, vec![0.0, 1e4, -5.0]));
        assert_eq!(p.values[0], 0.5);
        assert!(p.values[1] < 1e-6);
        assert_eq!(p.values[2], 0.5);
    }

    #[test]
    fn median_removes_outlier() {
        let mut v = vec![0.25; 25];
        v[12] = 1.0;
        let m = median3(&map(5, 5, v));
        assert!(m.values.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn render_constant_half_is_128() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        render_map(&map(2, 3, vec![0.5; 6]), &path, PostProcess::None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 6..], &[128; 6]);
    }

    #[test]
    fn render_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let values: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).fract()).collect();
        let m = map(4, 5, values.clone());
        render_map(&m, &path, PostProcess::None).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in back.r().data().iter().zip(&values) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn window_validation() {
        let img = ImagePlane::filled(64, 64, 0.5);
        let res = NoiseResidual {
            plane: img.clone(),
            source_id: String::new(),
        };
        let fp = Fingerprint::new(ImagePlane::filled(64, 64, 0.0), "c", "p", 1).unwrap();
        assert!(matches!(pce_map(&img, &res, &fp, 65, 8), Err(Error::Size(_))));
        assert!(matches!(pce_map(&img, &res, &fp, 32, 0), Err(Error::Argument(_))));
        assert!(matches!(pce_map(&img, &res, &fp, 32, 16), Err(Error::Degenerate(_))));
    }
}
