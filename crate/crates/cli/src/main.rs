//! `prnu`: camera fingerprint estimation, matching, alignment, localization,
//! simulation and evaluation from the command line.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prnu_core::denoise::DenoiserSpec;
use prnu_core::fingerprint::{
    clean_fingerprint, load_fingerprint, residual, save_fingerprint, Accumulator, EstimateOptions,
};
use prnu_core::harness::{
    build_dataset, detection_summary, manifest_hash, report, run_experiment, run_with_source, DiskSource,
    Experiment, DatasetManifest, ExperimentOutcome, REPORT_FPR,
};
use prnu_core::imaging::load_luminance;
use prnu_core::localization::{pce_map, probability_map, render_map, PostProcess, DEFAULT_STRIDE, DEFAULT_WINDOW};
use prnu_core::matching::{align, match_image, PCE_THRESHOLD};
use prnu_core::Error;

#[derive(Parser)]
#[command(name = "prnu", version, about = "Camera fingerprint (PRNU) forensics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a camera fingerprint from a set of images.
    Estimate(EstimateArgs),
    /// Score an image (or its patches) against a fingerprint.
    Match(MatchArgs),
    /// Find the translation between two fingerprints.
    Align(AlignArgs),
    /// Sliding-window tampering map of an image.
    Localize(LocalizeArgs),
    /// Generate a synthetic dataset from an experiment config.
    Simulate(SimulateArgs),
    /// Run an experiment and write its reports.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Glob matching the input images (PGM/PPM).
    #[arg(long)]
    images: String,
    #[arg(long, default_value_t = DenoiserSpec::default())]
    denoiser: DenoiserSpec,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "")]
    camera: String,
    #[arg(long, default_value = "")]
    pipeline: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    fingerprint: PathBuf,
    /// Score non-overlapping square patches of this size instead of the whole image.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long, default_value_t = DenoiserSpec::default())]
    denoiser: DenoiserSpec,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 16)]
    max_shift: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    fingerprint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    /// Output map: `.json` for raw values, anything else renders an 8-bit PGM.
    #[arg(long)]
    out_map: PathBuf,
    /// Apply a 3x3 median filter before rendering.
    #[arg(long)]
    median: bool,
    #[arg(long, default_value_t = DenoiserSpec::default())]
    denoiser: DenoiserSpec,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Experiment config; images are synthesized on the fly.
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    config: Option<PathBuf>,
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Match(a) => match_cmd(a),
        Command::Align(a) => align_cmd(a),
        Command::Localize(a) => localize(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn json_out(value: &impl serde::Serialize) -> Outcome {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

/// Rounds to six decimals and drops trailing zeros, keeping one.
fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

fn estimate(a: EstimateArgs) -> Outcome {
    let paths = glob::glob(&a.images).map_err(|e| Failure::Usage(format!("bad pattern {:?}: {e}", a.images)))?;
    let mut paths: Vec<PathBuf> = paths
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Domain(Error::io(e.path().to_path_buf(), e.into())))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(format!("no images match {:?}", a.images)));
    }
    let opts = EstimateOptions::default();
    let mut acc: Option<Accumulator> = None;
    for path in &paths {
        let img = load_luminance(path)?;
        if let Some(acc) = &acc {
            if acc.dims() != img.dims() {
                return Err(Error::Shape(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    img.width(),
                    img.height(),
                    acc.dims().0,
                    acc.dims().1
                ))
                .into());
            }
        }
        let r = residual(&img, &a.denoiser)?;
        match &mut acc {
            Some(acc) => acc.add(&img, &r, &opts)?,
            None => acc = Some(Accumulator::single(&img, &r, &opts)?),
        }
    }
    let acc = acc.expect("at least one image");
    let fp = clean_fingerprint(&acc.finish()?).labeled(&a.camera, &a.pipeline);
    save_fingerprint(&fp, &a.out)?;
    let (w, h) = fp.dims();
    if a.json {
        json_out(&serde_json::json!({
            "n_sources": fp.n_sources,
            "width": w,
            "height": h,
            "out": a.out,
        }))
    } else {
        println!("n_sources {}, dims {w}x{h}, written to {}", fp.n_sources, a.out.display());
        Ok(())
    }
}

fn match_cmd(a: MatchArgs) -> Outcome {
    let img = load_luminance(&a.image)?;
    let fp = load_fingerprint(&a.fingerprint)?;
    let r = residual(&img, &a.denoiser)?;
    let scores = match_image(&img, &r, &fp, a.patch)?;
    if a.json {
        return json_out(&scores);
    }
    println!("{:>6} {:>6} {:>6} {:>14} {:>11} {:>12}", "x", "y", "size", "pce", "peak", "p_value");
    for s in &scores {
        let size = s.size.map_or("all".to_string(), |v| v.to_string());
        let (dx, dy) = s.score.peak_location;
        println!(
            "{:>6} {:>6} {:>6} {:>14.2} {:>11} {:>12.3e}",
            s.x,
            s.y,
            size,
            s.score.pce,
            format!("{dx} {dy}"),
            s.score.p_value
        );
    }
    let above = scores.iter().filter(|s| s.score.pce > PCE_THRESHOLD).count();
    println!("{above} of {} above PCE {PCE_THRESHOLD}", scores.len());
    Ok(())
}

fn align_cmd(a: AlignArgs) -> Outcome {
    let fa = load_fingerprint(&a.a)?;
    let fb = load_fingerprint(&a.b)?;
    let common = prnu_core::harness::common_crop(&[fa, fb])?;
    let al = align(&common[0], &common[1], a.max_shift)?;
    if a.json {
        return json_out(&al);
    }
    println!("shift {} {}, ncc {}", al.dx, al.dy, num(al.ncc));
    Ok(())
}

fn localize(a: LocalizeArgs) -> Outcome {
    let img = load_luminance(&a.image)?;
    let fp = load_fingerprint(&a.fingerprint)?;
    let r = residual(&img, &a.denoiser)?;
    let pces = pce_map(&img, &r, &fp, a.window, a.stride)?;
    let prob = probability_map(&pces);
    let is_json = a.out_map.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        write_text(&a.out_map, &prob.to_json()?)?;
    } else {
        let post = if a.median { PostProcess::Median3 } else { PostProcess::None };
        render_map(&prob, &a.out_map, post)?;
    }
    if a.json {
        return json_out(&prob);
    }
    let mean = prob.values.iter().sum::<f64>() / prob.values.len() as f64;
    let max = prob.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{}x{} windows ({}px, stride {}), mean probability {}, max {}, map written to {}",
        prob.rows,
        prob.cols,
        prob.window,
        prob.stride,
        num(mean),
        num(max),
        a.out_map.display()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn simulate(a: SimulateArgs) -> Outcome {
    let exp = Experiment::load(&a.config)?;
    let manifest = build_dataset(&exp, &a.out)?;
    let images: usize = manifest.entries.iter().map(|e| e.estimation.len() + e.test.len()).sum();
    println!(
        "{} cameras x {} pipelines, {images} images, manifest {}",
        manifest.cameras.len(),
        manifest.pipelines.len(),
        manifest_hash(&manifest)?
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let outcome: ExperimentOutcome = match (&a.config, &a.dataset) {
        (Some(config), None) => run_experiment(&Experiment::load(config)?)?,
        (None, Some(dir)) => {
            let manifest = DatasetManifest::load(dir)?;
            let source = DiskSource::open(dir)?;
            run_with_source(&manifest.experiment, &source)?
        }
        _ => return Err(Failure::Usage("give exactly one of --config or --dataset".into())),
    };
    report(&outcome, &a.out)?;
    let rows = detection_summary(&outcome.records, &outcome.experiment.pipeline_ids(), REPORT_FPR)?;
    if a.json {
        return json_out(&rows);
    }
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<32} {:>6} {:>6} {:>6} {:>12} {:>8} {:>10}",
        "scope",
        "size",
        "pos",
        "neg",
        "median_pce",
        "auc",
        format!("tpr@{}%", REPORT_FPR * 100.0)
    );
    for r in &rows {
        let _ = writeln!(
            table,
            "{:<32} {:>6} {:>6} {:>6} {:>12.1} {:>8.4} {:>10.3}",
            r.scope, r.patch_size, r.positives, r.negatives, r.median_pce, r.auc, r.tpr_at_fpr
        );
    }
    print!("{table}");
    for c in &outcome.correlations {
        let split: Vec<String> = c
            .split_half
            .iter()
            .map(|v| v.map_or("-".into(), num))
            .collect();
        println!("{}: split-half ncc {}", c.camera, split.join(" "));
    }
    println!("reports written to {}", a.out.display());
    Ok(())
}
