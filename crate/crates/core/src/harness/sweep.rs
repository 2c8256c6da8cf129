//! PCE of test patches against estimated fingerprints, by patch size.

use serde::{Deserialize, Serialize};

use super::{FingerprintSet, ImageSource, Split};
use crate::denoise::DenoiserSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::fingerprint::residual;
use crate::imaging::patch_origins;
use crate::matching::match_patch;

/// One patch scored against one fingerprint. Positive means the patch was
/// taken by the fingerprint's camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub est_camera: String,
    pub est_pipeline: String,
    pub test_camera: String,
    pub test_pipeline: String,
    pub patch_size: usize,
    pub image: usize,
    pub x: usize,
    pub y: usize,
    pub positive: bool,
    pub pce: f64,
    pub peak_dx: isize,
    pub peak_dy: isize,
    pub p_value: f64,
}

impl SweepRecord {
    pub fn same_pipeline(&self) -> bool {
        self.est_pipeline == self.test_pipeline
    }
}

/// Scores every test image of every camera and pipeline against the
/// fingerprints estimated with `estimation_pipeline`.
pub fn pce_sweep(
    source: &dyn ImageSource,
    fingerprints: &FingerprintSet,
    denoiser: &DenoiserSpec,
    estimation_pipeline: &str,
    patch_sizes: &[usize],
) -> Result<Vec<SweepRecord>> {
    let pipelines = source.pipeline_ids();
    let p = pipelines
        .iter()
        .position(|id| id == estimation_pipeline)
        .ok_or_else(|| Error::State(format!("unknown pipeline {estimation_pipeline:?}")))?;
    sweep(source, fingerprints, denoiser, &[p], patch_sizes)
}

/// [`pce_sweep`] for every estimation pipeline at once; test images are
/// developed once instead of once per estimation pipeline.
pub fn pce_sweep_all(
    source: &dyn ImageSource,
    fingerprints: &FingerprintSet,
    denoiser: &DenoiserSpec,
    patch_sizes: &[usize],
) -> Result<Vec<SweepRecord>> {
    let all: Vec<usize> = (0..source.pipeline_ids().len()).collect();
    sweep(source, fingerprints, denoiser, &all, patch_sizes)
}

fn sweep(
    source: &dyn ImageSource,
    fingerprints: &FingerprintSet,
    denoiser: &DenoiserSpec,
    est_pipelines: &[usize],
    patch_sizes: &[usize],
) -> Result<Vec<SweepRecord>> {
    let cameras = source.camera_ids();
    let pipelines = source.pipeline_ids();
    // Resolve every fingerprint up front so a missing one fails before any work.
    let mut fps = Vec::new();
    for c in &cameras {
        for &p in est_pipelines {
            fps.push(fingerprints.find(c, &pipelines[p])?);
        }
    }
    let n_test = source.count(Split::Test);
    let jobs: Vec<(usize, usize)> = (0..cameras.len())
        .flat_map(|c| (0..n_test).map(move |t| (c, t)))
        .collect();

    let scored = exec::try_map_range(jobs.len(), |j| -> Result<Vec<(Key, SweepRecord)>> {
        let (tc, t) = jobs[j];
        let images = source.developed(tc, Split::Test, t)?;
        let mut out = Vec::new();
        for (q, img) in images.iter().enumerate() {
            let res = residual(img, denoiser)?;
            for (ec, camera) in cameras.iter().enumerate() {
                for (k, &p) in est_pipelines.iter().enumerate() {
                    let fp = fps[ec * est_pipelines.len() + k];
                    let (fw, fh) = fp.dims();
                    let (w, h) = (fw.min(img.width()), fh.min(img.height()));
                    for (si, &size) in patch_sizes.iter().enumerate() {
                        for (x, y) in patch_origins(w, h, size) {
                            let s = match_patch(img, &res, fp, (x, y), size)?;
                            out.push((
                                (ec, p, tc, q, si, t, y, x),
                                SweepRecord {
                                    est_camera: camera.clone(),
                                    est_pipeline: pipelines[p].clone(),
                                    test_camera: cameras[tc].clone(),
                                    test_pipeline: pipelines[q].clone(),
                                    patch_size: size,
                                    image: t,
                                    x,
                                    y,
                                    positive: ec == tc,
                                    pce: s.pce,
                                    peak_dx: s.peak_location.0,
                                    peak_dy: s.peak_location.1,
                                    p_value: s.p_value,
                                },
                            ));
                        }
                    }
                }
            }
        }
        Ok(out)
    })?;
    let mut keyed: Vec<(Key, SweepRecord)> = scored.into_iter().flatten().collect();
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

/// (est camera, est pipeline, test camera, test pipeline, size, image, y, x)
type Key = (usize, usize, usize, usize, usize, usize, usize, usize);
