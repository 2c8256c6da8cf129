//! Experiment orchestration: dataset generation, per-pipeline fingerprints,
//! correlation matrices, PCE sweeps by patch size, ROC analysis and reports.
//!
//! Everything is driven by one [`Experiment`] document and one master seed.
//! Images are produced by an [`ImageSource`]: either synthesized on the fly
//! ([`SynthSource`]) or read back from a dataset written by [`build_dataset`].

mod correlation;
mod dataset;
mod report;
mod roc;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoise::DenoiserSpec;
use crate::error::{Error, Result};
use crate::ispsim::{Demosaic, PipelineConfig, SensorParams, Tone};

pub use correlation::{
    common_crop, correlation_matrix, correlate_camera, CameraCorrelation, CorrelationMatrix,
};
pub use dataset::{
    build_dataset, estimate_fingerprints, manifest_hash, CameraFingerprints, DatasetManifest,
    DiskSource, FingerprintSet, ImageSource, ManifestEntry, Split, SynthSource,
};
pub use report::{
    detection_summary, pce_summary, quantile, read_records, report, write_records,
    DetectionRow, PceSummaryRow, Relation, REPORT_FILES,
};
pub use roc::{roc, tpr_at_fpr, RocCurve};
pub use sweep::{pce_sweep, pce_sweep_all, SweepRecord};

/// False-positive rate at which detection summaries report TPR.
pub const REPORT_FPR: f64 = 0.005;

pub const DEFAULT_PATCH_SIZES: [usize; 4] = [128, 256, 512, 1024];
pub const DEFAULT_IMAGE_COUNT: usize = 60;
pub const DEFAULT_MAX_SHIFT: usize = 16;

/// One experiment, as read from its JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub seed: u64,
    pub cameras: Vec<SensorParams>,
    pub pipelines: Vec<PipelineConfig>,
    #[serde(default = "default_count")]
    pub estimation_count: usize,
    #[serde(default = "default_count")]
    pub test_count: usize,
    #[serde(default = "default_patch_sizes")]
    pub patch_sizes: Vec<usize>,
    #[serde(default)]
    pub denoiser: DenoiserSpec,
    #[serde(default = "default_max_shift")]
    pub max_shift: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_count() -> usize {
    DEFAULT_IMAGE_COUNT
}
fn default_patch_sizes() -> Vec<usize> {
    DEFAULT_PATCH_SIZES.to_vec()
}
fn default_max_shift() -> usize {
    DEFAULT_MAX_SHIFT
}

impl Experiment {
    /// Two `size x size` cameras, the default roster, `count` images per split.
    pub fn desk(seed: u64, size: usize, count: usize) -> Self {
        Self {
            seed,
            cameras: vec![
                SensorParams::new("cam-a", size, size, seed.wrapping_add(1)),
                SensorParams::new("cam-b", size, size, seed.wrapping_add(2)),
            ],
            pipelines: default_roster(),
            estimation_count: count,
            test_count: count,
            patch_sizes: DEFAULT_PATCH_SIZES.to_vec(),
            denoiser: DenoiserSpec::default(),
            max_shift: DEFAULT_MAX_SHIFT,
            output_dir: None,
        }
    }

    /// The CI configuration: 256 px sensors, 20 estimation and 20 test images.
    pub fn ci(seed: u64) -> Self {
        Self::desk(seed, 256, 20)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let exp: Self = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Config("experiment needs at least one camera".into()));
        }
        if self.pipelines.len() < 2 {
            return Err(Error::Config("experiment needs at least two pipelines".into()));
        }
        if self.estimation_count == 0 || self.test_count == 0 {
            return Err(Error::Config("image counts must be at least 1".into()));
        }
        if self.patch_sizes.contains(&0) {
            return Err(Error::Config("patch sizes must be positive".into()));
        }
        unique("camera", self.cameras.iter().map(|c| c.id.as_str()))?;
        unique("pipeline", self.pipelines.iter().map(|p| p.id.as_str()))?;
        for c in &self.cameras {
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
            for p in &self.pipelines {
                p.output_dims(c.width, c.height)?;
            }
        }
        for p in &self.pipelines {
            p.validate()?;
        }
        self.denoiser.validate()
    }

    pub fn camera_ids(&self) -> Vec<String> {
        self.cameras.iter().map(|c| c.id.clone()).collect()
    }

    pub fn pipeline_ids(&self) -> Vec<String> {
        self.pipelines.iter().map(|p| p.id.clone()).collect()
    }
}

fn unique<'a>(what: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if id.is_empty() || !seen.insert(id) {
            return Err(Error::Config(format!("{what} id {id:?} is empty or repeated")));
        }
    }
    Ok(())
}

/// The default six-pipeline roster.
///
/// Tone curves are pointwise and nearly cancel out of the estimator, so each
/// config differs from the others in its spatial processing. The last entry is
/// the first one with a crop offset applied.
pub fn default_roster() -> Vec<PipelineConfig> {
    let gamma = Tone::Gamma { gamma: 2.2 };
    let scurve = Tone::Scurve { strength: 0.6 };
    let wavelet = DenoiserSpec::Wavelet {
        noise_variance: 5e-5,
    };

    let mut nearest_sharp = PipelineConfig::new("nearest-scurve-sharp", Demosaic::Nearest, scurve);
    nearest_sharp.sharpen = Some(3.0);

    let edge = PipelineConfig::new("edge-scurve", Demosaic::EdgeDirected, scurve);

    let mut bilinear_wavelet =
        PipelineConfig::new("bilinear-gamma-wavelet", Demosaic::Bilinear, gamma);
    bilinear_wavelet.denoise = Some(wavelet);
    bilinear_wavelet.sharpen = Some(3.0);

    let mut nearest_wavelet = PipelineConfig::new("nearest-gamma-wavelet", Demosaic::Nearest, gamma);
    nearest_wavelet.denoise = Some(wavelet);
    nearest_wavelet.sharpen = Some(3.0);

    let mut denoise = PipelineConfig::new("nearest-denoise", Demosaic::Nearest, gamma);
    denoise.denoise = Some(DenoiserSpec::Gaussian { sigma: 1.0 });

    let mut cropped = nearest_sharp.clone();
    cropped.id = "nearest-scurve-sharp-crop".into();
    cropped.crop_offset = (5, 3);

    vec![nearest_sharp, edge, bilinear_wavelet, nearest_wavelet, denoise, cropped]
}

/// Index of the config that `pipelines[index]` reproduces up to a crop, if
/// `pipelines[index]` has a crop offset and such a config exists.
pub fn crop_twin(pipelines: &[PipelineConfig], index: usize) -> Option<usize> {
    let p = &pipelines[index];
    if p.crop_offset == (0, 0) {
        return None;
    }
    pipelines.iter().position(|q| {
        q.crop_offset == (0, 0)
            && q.demosaic == p.demosaic
            && q.white_balance == p.white_balance
            && q.tone == p.tone
            && q.denoise == p.denoise
            && q.sharpen == p.sharpen
    })
}

/// Everything an experiment run produces.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub experiment: Experiment,
    pub correlations: Vec<CameraCorrelation>,
    pub records: Vec<SweepRecord>,
}

/// Runs the whole protocol against synthesized images.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentOutcome> {
    exp.validate()?;
    run_with_source(exp, &SynthSource::new(exp.clone())?)
}

/// Runs the protocol against any image source (e.g. a dataset on disk).
pub fn run_with_source(exp: &Experiment, source: &dyn ImageSource) -> Result<ExperimentOutcome> {
    let set = estimate_fingerprints(source, &exp.denoiser)?;
    let correlations = set
        .cameras
        .iter()
        .map(|c| correlate_camera(c, exp.max_shift))
        .collect::<Result<Vec<_>>>()?;
    let records = pce_sweep_all(source, &set, &exp.denoiser, &exp.patch_sizes)?;
    Ok(ExperimentOutcome {
        experiment: exp.clone(),
        correlations,
        records,
    })
}
