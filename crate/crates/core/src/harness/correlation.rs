//! Pairwise fingerprint similarity across pipelines.

use serde::{Deserialize, Serialize};

use super::CameraFingerprints;
use crate::error::{Error, Result};
use crate::exec;
use crate::fingerprint::Fingerprint;
use crate::imaging::crop;
use crate::matching::{align, align_planes, ncc};

/// Post-alignment NCC between every pair of fingerprints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub ids: Vec<String>,
    pub ncc: Vec<Vec<f64>>,
    /// `shift[i][j]` is the alignment of `j` relative to `i`.
    pub shift: Vec<Vec<(isize, isize)>>,
}

/// Aligns every pair within `±max_shift` and records the overlap NCC.
/// The upper triangle is computed and mirrored, so the result is exactly
/// symmetric with negated shifts below the diagonal.
pub fn correlation_matrix(fps: &[Fingerprint], max_shift: usize) -> Result<CorrelationMatrix> {
    if fps.len() < 2 {
        return Err(Error::Argument("need at least two fingerprints".into()));
    }
    for f in &fps[1..] {
        f.plane.ensure_same_dims(&fps[0].plane)?;
    }
    let n = fps.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let aligned = exec::try_map_range(pairs.len(), |k| {
        let (i, j) = pairs[k];
        align(&fps[i], &fps[j], max_shift)
    })?;
    let mut ncc = vec![vec![1.0; n]; n];
    let mut shift = vec![vec![(0, 0); n]; n];
    for (&(i, j), a) in pairs.iter().zip(aligned) {
        ncc[i][j] = a.ncc;
        ncc[j][i] = a.ncc;
        shift[i][j] = (a.dx, a.dy);
        shift[j][i] = (-a.dx, -a.dy);
    }
    Ok(CorrelationMatrix {
        ids: fps.iter().map(|f| f.pipeline_id.clone()).collect(),
        ncc,
        shift,
    })
}

/// Crops every fingerprint to the top-left region they all cover.
pub fn common_crop(fps: &[Fingerprint]) -> Result<Vec<Fingerprint>> {
    let w = fps.iter().map(|f| f.dims().0).min().unwrap_or(0);
    let h = fps.iter().map(|f| f.dims().1).min().unwrap_or(0);
    fps.iter()
        .map(|f| {
            Ok(Fingerprint {
                plane: crop(&f.plane, 0, 0, w, h)?,
                ..f.clone()
            })
        })
        .collect()
}

/// Correlation analysis of one camera's fingerprints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraCorrelation {
    pub camera: String,
    pub matrix: CorrelationMatrix,
    /// Aligned NCC between the two half-set fingerprints of each pipeline.
    pub split_half: Vec<Option<f64>>,
    /// NCC at zero shift, before any alignment.
    pub unaligned: Vec<Vec<f64>>,
}

pub fn correlate_camera(c: &CameraFingerprints, max_shift: usize) -> Result<CameraCorrelation> {
    let fps = common_crop(&c.full)?;
    let matrix = correlation_matrix(&fps, max_shift)?;
    let n = fps.len();
    let mut unaligned = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = ncc(&fps[i].plane, &fps[j].plane)?;
            unaligned[i][j] = v;
            unaligned[j][i] = v;
        }
    }
    let split_half = c
        .halves
        .iter()
        .map(|h| {
            h.as_ref()
                .map(|(a, b)| align_planes(&a.plane, &b.plane, max_shift).map(|al| al.ncc))
                .transpose()
        })
        .collect::<Result<_>>()?;
    Ok(CameraCorrelation {
        camera: c.camera.clone(),
        matrix,
        split_half,
        unaligned,
    })
}
