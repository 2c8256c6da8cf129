//! Summaries of sweep records and the report files written after a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{roc, tpr_at_fpr, ExperimentOutcome, SweepRecord, REPORT_FPR};
use crate::error::{Error, Result};

pub const CORRELATION_FILE: &str = "correlation.csv";
pub const PCE_SUMMARY_FILE: &str = "pce_summary.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const RECORDS_FILE: &str = "records.csv";

pub const REPORT_FILES: [&str; 6] = [
    CORRELATION_FILE,
    PCE_SUMMARY_FILE,
    ROC_FILE,
    SUMMARY_FILE,
    METADATA_FILE,
    RECORDS_FILE,
];

/// Whether a record's test image went through the estimation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Same,
    Cross,
}

impl Relation {
    pub fn of(r: &SweepRecord) -> Self {
        if r.same_pipeline() {
            Relation::Same
        } else {
            Relation::Cross
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Same => "same",
            Relation::Cross => "cross",
        }
    }
}

/// Linear-interpolation quantile of ascending `sorted` (NaN when empty).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PceSummaryRow {
    pub est_pipeline: String,
    pub test_pipeline: String,
    pub patch_size: usize,
    pub positive: bool,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Median and quartiles of PCE per (estimation pipeline, test pipeline, patch
/// size, class), in `pipelines` order, then size, positives first.
pub fn pce_summary(records: &[SweepRecord], pipelines: &[String]) -> Vec<PceSummaryRow> {
    let rank = |id: &str| pipelines.iter().position(|p| p == id).unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(usize, usize, usize, bool), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((rank(&r.est_pipeline), rank(&r.test_pipeline), r.patch_size, !r.positive))
            .or_default()
            .push(r.pce);
    }
    groups
        .into_iter()
        .map(|((e, t, size, neg), v)| {
            let v = sorted(v);
            PceSummaryRow {
                est_pipeline: pipelines[e].clone(),
                test_pipeline: pipelines[t].clone(),
                patch_size: size,
                positive: !neg,
                count: v.len(),
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
            }
        })
        .collect()
}

/// Detection quality for one group of records at one patch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    /// `same`, `cross`, or an estimation pipeline id (same-pipeline records
    /// of that pipeline only).
    pub scope: String,
    pub patch_size: usize,
    pub positives: usize,
    pub negatives: usize,
    pub median_pce: f64,
    pub auc: f64,
    pub tpr_at_fpr: f64,
}

fn detection_row(scope: String, size: usize, group: &[&SweepRecord], fpr: f64) -> Result<Option<DetectionRow>> {
    let pos: Vec<f64> = group.iter().filter(|r| r.positive).map(|r| r.pce).collect();
    let neg: Vec<f64> = group.iter().filter(|r| !r.positive).map(|r| r.pce).collect();
    if pos.is_empty() || neg.is_empty() {
        return Ok(None);
    }
    let curve = roc(&pos, &neg)?;
    Ok(Some(DetectionRow {
        scope,
        patch_size: size,
        positives: pos.len(),
        negatives: neg.len(),
        median_pce: quantile(&sorted(pos), 0.5),
        auc: curve.auc,
        tpr_at_fpr: tpr_at_fpr(&curve, fpr),
    }))
}

/// Pooled `same` and `cross` rows per patch size, then one row per
/// estimation pipeline and size.
pub fn detection_summary(records: &[SweepRecord], pipelines: &[String], fpr: f64) -> Result<Vec<DetectionRow>> {
    let sizes: Vec<usize> = {
        let mut s: Vec<usize> = records.iter().map(|r| r.patch_size).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut rows = Vec::new();
    for rel in [Relation::Same, Relation::Cross] {
        for &size in &sizes {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.patch_size == size && Relation::of(r) == rel)
                .collect();
            rows.extend(detection_row(rel.as_str().into(), size, &group, fpr)?);
        }
    }
    for p in pipelines {
        for &size in &sizes {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.patch_size == size && r.same_pipeline() && &r.est_pipeline == p)
                .collect();
            rows.extend(detection_row(p.clone(), size, &group, fpr)?);
        }
    }
    Ok(rows)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[SweepRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every report file into `out_dir`.
pub fn report(outcome: &ExperimentOutcome, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let exp = &outcome.experiment;
    let pipelines = exp.pipeline_ids();
    let records = &outcome.records;

    let mut header = vec!["camera".to_string(), "pipeline".to_string()];
    header.extend(pipelines.iter().cloned());
    let mut rows = Vec::new();
    for c in &outcome.correlations {
        for (i, id) in c.matrix.ids.iter().enumerate() {
            let mut row = vec![c.camera.clone(), id.clone()];
            row.extend(c.matrix.ncc[i].iter().map(|v| v.to_string()));
            rows.push(row);
        }
    }
    write_rows(&dir.join(CORRELATION_FILE), &header, &rows)?;

    let summary = pce_summary(records, &pipelines);
    let mut w = csv_writer(&dir.join(PCE_SUMMARY_FILE))?;
    for row in &summary {
        w.serialize(row).map_err(|e| csv_error(&dir.join(PCE_SUMMARY_FILE), e))?;
    }
    w.flush().map_err(|e| Error::io(dir.join(PCE_SUMMARY_FILE), e))?;

    let mut roc_rows = Vec::new();
    let mut sizes: Vec<usize> = records.iter().map(|r| r.patch_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for rel in [Relation::Same, Relation::Cross] {
        for &size in &sizes {
            let group = || records.iter().filter(|r| r.patch_size == size && Relation::of(r) == rel);
            let pos: Vec<f64> = group().filter(|r| r.positive).map(|r| r.pce).collect();
            let neg: Vec<f64> = group().filter(|r| !r.positive).map(|r| r.pce).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let curve = roc(&pos, &neg)?;
            for i in 0..curve.len() {
                roc_rows.push(vec![
                    rel.as_str().to_string(),
                    size.to_string(),
                    curve.thresholds[i].to_string(),
                    curve.fpr[i].to_string(),
                    curve.tpr[i].to_string(),
                ]);
            }
        }
    }
    let roc_header: Vec<String> = ["relation", "patch_size", "threshold", "fpr", "tpr"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_rows(&dir.join(ROC_FILE), &roc_header, &roc_rows)?;

    let detection = detection_summary(records, &pipelines, REPORT_FPR)?;
    write_json(
        &dir.join(SUMMARY_FILE),
        &serde_json::json!({
            "target_fpr": REPORT_FPR,
            "detection": detection,
            "correlation": outcome.correlations,
        }),
    )?;
    write_json(
        &dir.join(METADATA_FILE),
        &serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": exp.seed,
            "experiment": exp,
            "records": records.len(),
            "files": REPORT_FILES,
        }),
    )?;
    write_records(dir.join(RECORDS_FILE), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, Experiment};

    fn rec(est: &str, test: &str, size: usize, positive: bool, pce: f64) -> SweepRecord {
        SweepRecord {
            est_camera: "a".into(),
            est_pipeline: est.into(),
            test_camera: if positive { "a" } else { "b" }.into(),
            test_pipeline: test.into(),
            patch_size: size,
            image: 0,
            x: 0,
            y: 0,
            positive,
            pce,
            peak_dx: 0,
            peak_dy: 0,
            p_value: 0.5,
        }
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn summaries_group_and_order() {
        let ids = vec!["p".to_string(), "q".to_string()];
        let recs = vec![
            rec("q", "p", 64, true, 5.0),
            rec("p", "p", 64, false, 1.0),
            rec("p", "p", 64, true, 100.0),
            rec("p", "p", 64, true, 300.0),
            rec("p", "q", 64, true, 20.0),
            rec("p", "q", 64, false, -2.0),
        ];
        let s = pce_summary(&recs, &ids);
        let keys: Vec<_> = s
            .iter()
            .map(|r| (r.est_pipeline.as_str(), r.test_pipeline.as_str(), r.positive, r.count))
            .collect();
        assert_eq!(
            keys,
            [("p", "p", true, 2), ("p", "p", false, 1), ("p", "q", true, 1), ("p", "q", false, 1), ("q", "p", true, 1)]
        );
        assert_eq!(s[0].median, 200.0);

        let d = detection_summary(&recs, &ids, 0.005).unwrap();
        let scopes: Vec<_> = d.iter().map(|r| r.scope.as_str()).collect();
        assert_eq!(scopes, ["same", "cross", "p"]);
        assert_eq!(d[0].auc, 1.0);
        assert_eq!(d[0].tpr_at_fpr, 1.0);
        assert_eq!(d[1].positives, 2);
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = vec![rec("p, \"x\"", "q", 64, true, 1.0 / 3.0), rec("p", "q", 128, false, -1e-300)];
        recs[1].peak_dx = -7;
        let path = dir.path().join("r.csv");
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
    }

    #[test]
    fn report_files_are_complete_and_reproducible() {
        let mut exp = Experiment::desk(12, 64, 2);
        exp.cameras[0].width = 96;
        exp.pipelines.truncate(3);
        exp.patch_sizes = vec![32, 64];
        exp.max_shift = 4;
        let out = run_experiment(&exp).unwrap();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        report(&out, d1.path()).unwrap();
        report(&run_experiment(&exp).unwrap(), d2.path()).unwrap();
        for f in REPORT_FILES {
            let a = fs::read(d1.path().join(f)).unwrap();
            assert_eq!(a, fs::read(d2.path().join(f)).unwrap(), "{f}");
            assert!(!a.contains(&b'\r'));
        }

        let corr = fs::read_to_string(d1.path().join(CORRELATION_FILE)).unwrap();
        let ids = exp.pipeline_ids();
        let mut lines = corr.lines();
        assert_eq!(lines.next().unwrap(), format!("camera,pipeline,{}", ids.join(",")));
        let row_ids: Vec<_> = lines.map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
        assert_eq!(row_ids, [ids.clone(), ids.clone()].concat());

        // Medians recomputed from the raw records file.
        let recs = read_records(d1.path().join(RECORDS_FILE)).unwrap();
        let mut rdr = csv::Reader::from_path(d1.path().join(PCE_SUMMARY_FILE)).unwrap();
        let rows: Vec<PceSummaryRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
        assert!(!rows.is_empty());
        for row in rows {
            let v = sorted(
                recs.iter()
                    .filter(|r| {
                        r.est_pipeline == row.est_pipeline
                            && r.test_pipeline == row.test_pipeline
                            && r.patch_size == row.patch_size
                            && r.positive == row.positive
                    })
                    .map(|r| r.pce)
                    .collect(),
            );
            assert_eq!(v.len(), row.count);
            assert_eq!(quantile(&v, 0.5), row.median);
        }

        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d1.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert!(summary["detection"].as_array().unwrap().len() >= 2);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d1.path().join(METADATA_FILE)).unwrap()).unwrap();
        assert_eq!(meta["seed"], 12);
    }
}
