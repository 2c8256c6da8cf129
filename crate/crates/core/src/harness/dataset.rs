//! Image sources, on-disk datasets and per-pipeline fingerprint estimation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Experiment;
use crate::denoise::DenoiserSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::fingerprint::{
    clean_fingerprint, residual, save_fingerprint, Accumulator, EstimateOptions, Fingerprint,
};
use crate::imaging::{load_luminance, save_ppm, to_luminance, BitDepth, ColorImage, ImagePlane};
use crate::ispsim::{capture, derive_seed, develop, synth_scene, synth_sensor, SceneKind, SensorProfile};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Sources per estimation batch; bounds memory while keeping the merge order
/// independent of the thread count.
const BATCH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Estimation,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Estimation => 0,
            Split::Test => 1,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Estimation => "estimation",
            Split::Test => "test",
        })
    }
}

/// Where experiment images come from. Each capture is developed by every
/// pipeline, so all pipelines see identical raws.
pub trait ImageSource: Sync {
    fn camera_ids(&self) -> Vec<String>;
    fn pipeline_ids(&self) -> Vec<String>;
    fn count(&self, split: Split) -> usize;
    /// Luminance of one capture developed by every pipeline, in pipeline order.
    fn developed(&self, camera: usize, split: Split, index: usize) -> Result<Vec<ImagePlane>>;
}

/// Synthesizes captures on demand from an [`Experiment`].
pub struct SynthSource {
    exp: Experiment,
    sensors: Vec<SensorProfile>,
}

impl SynthSource {
    pub fn new(exp: Experiment) -> Result<Self> {
        exp.validate()?;
        let sensors = exp
            .cameras
            .iter()
            .map(|c| synth_sensor(c.clone()))
            .collect::<Result<_>>()?;
        Ok(Self { exp, sensors })
    }

    pub fn experiment(&self) -> &Experiment {
        &self.exp
    }

    pub fn sensors(&self) -> &[SensorProfile] {
        &self.sensors
    }

    /// The raw mosaic of one capture.
    pub fn raw(&self, camera: usize, split: Split, index: usize) -> Result<ImagePlane> {
        let sensor = &self.sensors[camera];
        let (w, h) = sensor.dims();
        let seed = |part: u64| derive_seed(&[self.exp.seed, camera as u64, split.tag(), index as u64, part]);
        let scene = synth_scene(w, h, SceneKind::Texture, seed(0))?;
        capture(&scene, sensor, seed(1))
    }

    pub fn developed_color(&self, camera: usize, split: Split, index: usize) -> Result<Vec<ColorImage>> {
        let raw = self.raw(camera, split, index)?;
        self.exp.pipelines.iter().map(|p| develop(&raw, p)).collect()
    }
}

impl ImageSource for SynthSource {
    fn camera_ids(&self) -> Vec<String> {
        self.exp.camera_ids()
    }

    fn pipeline_ids(&self) -> Vec<String> {
        self.exp.pipeline_ids()
    }

    fn count(&self, split: Split) -> usize {
        match split {
            Split::Estimation => self.exp.estimation_count,
            Split::Test => self.exp.test_count,
        }
    }

    fn developed(&self, camera: usize, split: Split, index: usize) -> Result<Vec<ImagePlane>> {
        Ok(self
            .developed_color(camera, split, index)?
            .iter()
            .map(to_luminance)
            .collect())
    }
}

// --- datasets on disk -------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Relative to the dataset root, '/'-separated.
    pub path: String,
    /// Identifies the raw capture; equal across pipelines.
    pub capture: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub camera: String,
    pub pipeline: String,
    pub estimation: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
}

impl ManifestEntry {
    pub fn split(&self, split: Split) -> &[ImageRecord] {
        match split {
            Split::Estimation => &self.estimation,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub cameras: Vec<String>,
    pub pipelines: Vec<String>,
    /// One entry per (camera, pipeline), cameras outermost.
    pub entries: Vec<ManifestEntry>,
    /// Planted PRNU per camera, in the fingerprint file format.
    pub ground_truth: Vec<String>,
    pub experiment: Experiment,
}

impl DatasetManifest {
    pub fn entry(&self, camera: usize, pipeline: usize) -> &ManifestEntry {
        &self.entries[camera * self.pipelines.len() + pipeline]
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.entries.len() != m.cameras.len() * m.pipelines.len() {
            return Err(Error::Format(format!(
                "manifest lists {} entries for {} cameras x {} pipelines",
                m.entries.len(),
                m.cameras.len(),
                m.pipelines.len()
            )));
        }
        Ok(m)
    }
}

/// Hex SHA-256 of the manifest's canonical JSON. Image digests are part of the
/// manifest, so equal hashes mean equal datasets.
pub fn manifest_hash(manifest: &DatasetManifest) -> Result<String> {
    Ok(hex(&Sha256::digest(serde_json::to_vec(manifest)?)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Captures `E + T` raws per camera, develops each through every pipeline and
/// writes 16-bit PPMs plus `manifest.json` under `out_dir`.
pub fn build_dataset(exp: &Experiment, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = out_dir.as_ref();
    let source = SynthSource::new(exp.clone())?;
    let cameras = exp.camera_ids();
    let pipelines = exp.pipeline_ids();

    let mut ground_truth = Vec::new();
    for (ci, sensor) in source.sensors().iter().enumerate() {
        let rel = format!("sensors/camera{ci}.prnu");
        let fp = Fingerprint::new(sensor.prnu.clone(), &cameras[ci], "groundtruth", 1)?;
        write_file(root, &rel, |p| save_fingerprint(&fp, p))?;
        ground_truth.push(rel);
    }

    let mut entries: Vec<ManifestEntry> = cameras
        .iter()
        .flat_map(|c| {
            pipelines.iter().map(move |p| ManifestEntry {
                camera: c.clone(),
                pipeline: p.clone(),
                estimation: Vec::new(),
                test: Vec::new(),
            })
        })
        .collect();

    for ci in 0..cameras.len() {
        for split in [Split::Estimation, Split::Test] {
            let n = source.count(split);
            let written = exec::try_map_range(n, |i| -> Result<Vec<ImageRecord>> {
                let capture = format!("{}/{split}/{i:03}", cameras[ci]);
                let images = source.developed_color(ci, split, i)?;
                images
                    .iter()
                    .enumerate()
                    .map(|(pi, img)| {
                        let rel = format!("images/camera{ci}/pipeline{pi}/{split}_{i:03}.ppm");
                        write_file(root, &rel, |p| save_ppm(img, p, BitDepth::Sixteen))?;
                        let bytes = fs::read(root.join(&rel)).map_err(|e| Error::io(root.join(&rel), e))?;
                        Ok(ImageRecord {
                            path: rel,
                            capture: capture.clone(),
                            sha256: hex(&Sha256::digest(&bytes)),
                        })
                    })
                    .collect()
            })?;
            for records in written {
                for (pi, rec) in records.into_iter().enumerate() {
                    let e = &mut entries[ci * pipelines.len() + pi];
                    match split {
                        Split::Estimation => e.estimation.push(rec),
                        Split::Test => e.test.push(rec),
                    }
                }
            }
        }
    }

    let manifest = DatasetManifest {
        seed: exp.seed,
        cameras,
        pipelines,
        entries,
        ground_truth,
        experiment: exp.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    write_file(root, MANIFEST_FILE, |p| {
        fs::write(p, text.as_bytes()).map_err(|e| Error::io(p, e))
    })?;
    Ok(manifest)
}

fn write_file(root: &Path, rel: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write(&path)
}

/// Reads developed images back from a dataset directory.
pub struct DiskSource {
    root: PathBuf,
    manifest: DatasetManifest,
}

impl DiskSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let manifest = DatasetManifest::load(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }
}

impl ImageSource for DiskSource {
    fn camera_ids(&self) -> Vec<String> {
        self.manifest.cameras.clone()
    }

    fn pipeline_ids(&self) -> Vec<String> {
        self.manifest.pipelines.clone()
    }

    fn count(&self, split: Split) -> usize {
        self.manifest.entries.first().map_or(0, |e| e.split(split).len())
    }

    fn developed(&self, camera: usize, split: Split, index: usize) -> Result<Vec<ImagePlane>> {
        (0..self.manifest.pipelines.len())
            .map(|pi| {
                let records = self.manifest.entry(camera, pi).split(split);
                let rec = records.get(index).ok_or_else(|| {
                    Error::Format(format!(
                        "manifest has no {split} image {index} for camera {camera} pipeline {pi}"
                    ))
                })?;
                load_luminance(self.root.join(&rec.path))
            })
            .collect()
    }
}

// --- fingerprints -----------------------------------------------------------

/// Cleaned fingerprints of one camera, one per pipeline.
#[derive(Clone, Debug)]
pub struct CameraFingerprints {
    pub camera: String,
    pub pipelines: Vec<String>,
    /// From all estimation images.
    pub full: Vec<Fingerprint>,
    /// From the first and second half of the estimation images; absent when
    /// there is only one.
    pub halves: Vec<Option<(Fingerprint, Fingerprint)>>,
}

#[derive(Clone, Debug)]
pub struct FingerprintSet {
    pub cameras: Vec<CameraFingerprints>,
}

impl FingerprintSet {
    pub fn find(&self, camera: &str, pipeline: &str) -> Result<&Fingerprint> {
        self.cameras
            .iter()
            .find(|c| c.camera == camera)
            .and_then(|c| {
                c.pipelines
                    .iter()
                    .position(|p| p == pipeline)
                    .map(|i| &c.full[i])
            })
            .ok_or_else(|| {
                Error::State(format!("no fingerprint for camera {camera:?} pipeline {pipeline:?}"))
            })
    }
}

/// Estimates a fingerprint per (camera, pipeline) from the estimation split,
/// plus the two split-half fingerprints.
pub fn estimate_fingerprints(source: &dyn ImageSource, denoiser: &DenoiserSpec) -> Result<FingerprintSet> {
    let pipelines = source.pipeline_ids();
    let n = source.count(Split::Estimation);
    if n == 0 {
        return Err(Error::Argument("no estimation images".into()));
    }
    let opts = EstimateOptions::default();
    let mut cameras = Vec::new();
    for (ci, camera) in source.camera_ids().into_iter().enumerate() {
        // halves[h][p]
        let mut halves: [Vec<Option<Accumulator>>; 2] =
            [vec![None; pipelines.len()], vec![None; pipelines.len()]];
        for start in (0..n).step_by(BATCH) {
            let end = (start + BATCH).min(n);
            let batch = exec::try_map_range(end - start, |j| -> Result<Vec<Accumulator>> {
                let images = source.developed(ci, Split::Estimation, start + j)?;
                images
                    .iter()
                    .map(|img| Accumulator::single(img, &residual(img, denoiser)?, &opts))
                    .collect()
            })?;
            for (j, accs) in batch.into_iter().enumerate() {
                let h = usize::from(start + j >= n / 2);
                for (slot, acc) in halves[h].iter_mut().zip(accs) {
                    match slot {
                        Some(s) => s.merge(&acc)?,
                        None => *slot = Some(acc),
                    }
                }
            }
        }
        let [first, second] = halves;
        let mut full = Vec::new();
        let mut split = Vec::new();
        for (pi, (a, b)) in first.into_iter().zip(second).enumerate() {
            let label = |acc: &Accumulator| -> Result<Fingerprint> {
                Ok(clean_fingerprint(&acc.finish()?).labeled(&camera, &pipelines[pi]))
            };
            match (a, b) {
                (Some(a), Some(b)) => {
                    let mut all = a.clone();
                    all.merge(&b)?;
                    full.push(label(&all)?);
                    split.push(Some((label(&a)?, label(&b)?)));
                }
                (a, b) => {
                    let only = a.or(b).expect("at least one estimation image");
                    full.push(label(&only)?);
                    split.push(None);
                }
            }
        }
        cameras.push(CameraFingerprints {
            camera,
            pipelines: pipelines.clone(),
            full,
            halves: split,
        });
    }
    Ok(FingerprintSet { cameras })
}
