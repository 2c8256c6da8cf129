//! Module invariants as seeded property checks, shared by the `properties`
//! and `acceptance` test targets.

#![allow(dead_code)]

use prnu_core::denoise::DenoiserSpec;
use prnu_core::exec;
use prnu_core::fingerprint::{clean_fingerprint, estimate_fingerprint, residual, Fingerprint, NoiseResidual};
use prnu_core::harness::{build_dataset, manifest_hash, roc, Experiment};
use prnu_core::imaging::{
    decode_image, encode_pgm, encode_ppm, tile_patches, to_luminance, BitDepth, ColorImage, ImagePlane,
};
use prnu_core::ispsim::{capture, develop, synth_scene, synth_sensor, SceneKind, SensorParams};
use prnu_core::localization::{pce_map, probability_map, HeatMap};
use prnu_core::matching::{align_planes, cross_correlate, p_value, pce, CorrelationSurface};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const CASES: u32 = 128;

pub type Check = fn(u32) -> Result<(), String>;

/// (name, check) for every invariant.
pub const PROPERTIES: &[(&str, Check)] = &[
    ("imaging: tiling partitions the covered region", tiling_partition),
    ("imaging: decode/encode round trip is idempotent", codec_idempotent),
    ("imaging: luminance is linear", luminance_linear),
    ("denoise: gaussian is shift-covariant", gaussian_shift_covariant),
    ("denoise: wavelet is shift-covariant on its grid", wavelet_shift_covariant),
    ("denoise: constant planes are fixpoints", constant_fixpoint),
    ("fingerprint: homogeneous in the residuals", estimate_homogeneous),
    ("fingerprint: repeated source equals one source", estimate_repeated_source),
    ("fingerprint: source order does not matter", estimate_permutation),
    ("fingerprint: cleanup is idempotent", clean_idempotent),
    ("matching: FFT correlation equals brute force", correlation_brute_force),
    ("matching: PCE is scale invariant", pce_scale_invariant),
    ("matching: PCE is invariant to co-shifting", pce_coshift_invariant),
    ("matching: p-value is non-increasing", p_value_monotone),
    ("matching: align recovers planted shifts", align_recovers_shift),
    ("localization: grid dimensions", grid_dimensions),
    ("localization: probability map keeps order", probability_order),
    ("localization: splice probability inside exceeds outside", splice_fixture),
    ("ispsim: capture and develop are deterministic", simulator_deterministic),
    ("harness: ROC is monotone with AUC in [0, 1]", roc_monotone),
    ("harness: AUC equals the pairwise win fraction", auc_mann_whitney),
    ("harness: dataset hash is stable", dataset_deterministic),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn noise(w: usize, h: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    ImagePlane::from_fn(w, h, |_, _| n.sample(&mut rng))
}

pub fn uniform(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImagePlane::from_fn(w, h, |_, _| rng.random_range(lo..hi))
}

fn crop(p: &ImagePlane, x: usize, y: usize, w: usize, h: usize) -> ImagePlane {
    prnu_core::imaging::crop(p, x, y, w, h).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

// --- imaging ----------------------------------------------------------------

pub fn tiling_partition(cases: u32) -> Result<(), String> {
    check(cases, (1usize..80, 1usize..80, 1usize..40), |(w, h, size)| {
        let plane = ImagePlane::from_fn(w, h, |x, y| (y * w + x) as f64);
        match tile_patches(&plane, size) {
            Err(_) => prop_assert!(size > w.min(h)),
            Ok(grid) => {
                let mut hits = vec![0u32; w * h];
                for p in &grid.patches {
                    prop_assert_eq!(p.plane.dims(), (size, size));
                    for y in 0..size {
                        for x in 0..size {
                            let (gx, gy) = (p.x + x, p.y + y);
                            prop_assert_eq!(p.plane.get(x, y), plane.get(gx, gy));
                            hits[gy * w + gx] += 1;
                        }
                    }
                }
                let (cw, ch) = (w / size * size, h / size * size);
                for y in 0..h {
                    for x in 0..w {
                        let want = u32::from(x < cw && y < ch);
                        prop_assert_eq!(hits[y * w + x], want);
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn codec_idempotent(cases: u32) -> Result<(), String> {
    check(cases, (1usize..20, 1usize..20, any::<u64>(), any::<bool>()), |(w, h, seed, deep)| {
        let depth = if deep { BitDepth::Sixteen } else { BitDepth::Eight };
        let img = ColorImage::new(
            uniform(w, h, seed, 0.0, 1.0),
            uniform(w, h, seed ^ 1, 0.0, 1.0),
            uniform(w, h, seed ^ 2, 0.0, 1.0),
        )
        .unwrap();
        let once = decode_image(&encode_ppm(&img, depth)).unwrap();
        let twice = decode_image(&encode_ppm(&once, depth)).unwrap();
        prop_assert_eq!(&once, &twice);
        let gray = decode_image(&encode_pgm(img.r(), depth)).unwrap();
        let gray2 = decode_image(&encode_pgm(gray.r(), depth)).unwrap();
        prop_assert_eq!(gray, gray2);
        Ok(())
    })
}

pub fn luminance_linear(cases: u32) -> Result<(), String> {
    check(cases, (1usize..24, 1usize..24, any::<u64>(), 0.0..1.0f64, 0.0..1.0f64), |(w, h, s, a, b)| {
        let col = |seed: u64| {
            ColorImage::new(
                uniform(w, h, seed, 0.0, 1.0),
                uniform(w, h, seed + 1, 0.0, 1.0),
                uniform(w, h, seed + 2, 0.0, 1.0),
            )
            .unwrap()
        };
        let (x, y) = (col(s), col(s.wrapping_add(10)));
        let mix = ColorImage::new(
            x.r().zip_map(y.r(), |p, q| a * p + b * q).unwrap(),
            x.g().zip_map(y.g(), |p, q| a * p + b * q).unwrap(),
            x.b().zip_map(y.b(), |p, q| a * p + b * q).unwrap(),
        )
        .unwrap();
        let lhs = to_luminance(&mix);
        let (lx, ly) = (to_luminance(&x), to_luminance(&y));
        for i in 0..lhs.len() {
            prop_assert!((lhs.data()[i] - (a * lx.data()[i] + b * ly.data()[i])).abs() <= 1e-12);
        }
        Ok(())
    })
}

// --- denoise ----------------------------------------------------------------

pub fn gaussian_shift_covariant(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 0.3..3.0f64, -8isize..=8, -8isize..=8), |(seed, sigma, dx, dy)| {
        let base = noise(80, 80, seed);
        let spec = DenoiserSpec::Gaussian { sigma };
        let a = spec.apply(&crop(&base, 8, 8, 64, 64)).unwrap();
        let b = spec.apply(&crop(&base, (8 + dx) as usize, (8 + dy) as usize, 64, 64)).unwrap();
        // b(x) sees base(x + 8 + d) = a's input at x + d.
        let guard = (3.0 * sigma).ceil() as isize + 9;
        for y in guard..64 - guard {
            for x in guard..64 - guard {
                let va = a.get((x + dx) as usize, (y + dy) as usize);
                prop_assert!((va - b.get(x as usize, y as usize)).abs() <= 1e-9);
            }
        }
        Ok(())
    })
}

pub fn wavelet_shift_covariant(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 0usize..3, 0usize..3), |(seed, kx, ky)| {
        let base = uniform(480, 480, seed, 0.2, 0.8);
        let spec = DenoiserSpec::default();
        let (dx, dy) = (16 * kx, 16 * ky);
        let a = spec.apply(&crop(&base, 0, 0, 448, 448)).unwrap();
        let b = spec.apply(&crop(&base, dx, dy, 448, 448)).unwrap();
        let guard = 160;
        for y in guard..448 - guard - 32 {
            for x in guard..448 - guard - 32 {
                prop_assert!((a.get(x + dx, y + dy) - b.get(x, y)).abs() <= 1e-9);
            }
        }
        Ok(())
    })
}

pub fn constant_fixpoint(cases: u32) -> Result<(), String> {
    check(cases, (16usize..70, 16usize..70, 0.0..1.0f64, 0.3..3.0f64), |(w, h, c, sigma)| {
        let plane = ImagePlane::filled(w, h, c);
        for spec in [DenoiserSpec::default(), DenoiserSpec::Gaussian { sigma }] {
            let d = spec.apply(&plane).unwrap();
            prop_assert!(d.data().iter().all(|v| (v - c).abs() <= 1e-12));
            let r = residual(&plane, &spec).unwrap();
            prop_assert!(r.plane.data().iter().all(|v| v.abs() <= 1e-12));
        }
        Ok(())
    })
}

// --- fingerprint --------------------------------------------------------------

fn sources(n: usize, w: usize, h: usize, seed: u64) -> (Vec<ImagePlane>, Vec<NoiseResidual>) {
    let imgs = (0..n as u64).map(|i| uniform(w, h, seed + i, 0.05, 0.95)).collect();
    let res = (0..n as u64)
        .map(|i| NoiseResidual {
            plane: noise(w, h, seed + 1000 + i).map(|v| 0.01 * v),
            source_id: format!("s{i}"),
        })
        .collect();
    (imgs, res)
}

pub fn estimate_homogeneous(cases: u32) -> Result<(), String> {
    check(cases, (1usize..6, any::<u64>(), -4i32..4, 0.01..50.0f64), |(n, seed, k, alpha)| {
        let (imgs, res) = sources(n, 9, 7, seed);
        let base = estimate_fingerprint(&imgs, &res).unwrap();
        let scaled = |a: f64| {
            let r: Vec<_> = res
                .iter()
                .map(|r| NoiseResidual { plane: r.plane.map(|v| a * v), ..r.clone() })
                .collect();
            estimate_fingerprint(&imgs, &r).unwrap()
        };
        // Powers of two scale every product and sum exactly.
        let p = 2f64.powi(k);
        let exact = scaled(p);
        for (u, v) in exact.plane.data().iter().zip(base.plane.data()) {
            prop_assert_eq!(*u, p * v);
        }
        let approx = scaled(alpha);
        for (u, v) in approx.plane.data().iter().zip(base.plane.data()) {
            prop_assert!(close(*u, alpha * v, 1e-12));
        }
        Ok(())
    })
}

pub fn estimate_repeated_source(cases: u32) -> Result<(), String> {
    check(cases, (1usize..12, any::<u64>()), |(n, seed)| {
        let (imgs, res) = sources(1, 8, 8, seed);
        let one = estimate_fingerprint(&imgs, &res).unwrap();
        let many = estimate_fingerprint(&vec![imgs[0].clone(); n], &vec![res[0].clone(); n]).unwrap();
        for (u, v) in many.plane.data().iter().zip(one.plane.data()) {
            prop_assert!(close(*u, *v, 1e-12));
        }
        prop_assert_eq!(many.n_sources, n);
        Ok(())
    })
}

pub fn estimate_permutation(cases: u32) -> Result<(), String> {
    check(cases, (2usize..9, any::<u64>(), any::<u64>()), |(n, seed, shuffle)| {
        let (imgs, res) = sources(n, 7, 6, seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let a = estimate_fingerprint(&imgs, &res).unwrap();
        let pi: Vec<_> = order.iter().map(|&i| imgs[i].clone()).collect();
        let pr: Vec<_> = order.iter().map(|&i| res[i].clone()).collect();
        let b = estimate_fingerprint(&pi, &pr).unwrap();
        for (u, v) in a.plane.data().iter().zip(b.plane.data()) {
            prop_assert!(close(*u, *v, 1e-9));
        }
        Ok(())
    })
}

pub fn clean_idempotent(cases: u32) -> Result<(), String> {
    check(cases, (1usize..40, 1usize..40, any::<u64>()), |(w, h, seed)| {
        let fp = Fingerprint::new(noise(w, h, seed).map(|v| v + 3.0), "c", "p", 1).unwrap();
        let once = clean_fingerprint(&fp);
        let twice = clean_fingerprint(&once);
        for (u, v) in once.plane.data().iter().zip(twice.plane.data()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
        Ok(())
    })
}

// --- matching -----------------------------------------------------------------

/// `s(sx, sy) = sum_x a~(x) b~(x + s)` evaluated directly.
pub fn brute_correlation(a: &ImagePlane, b: &ImagePlane) -> Vec<f64> {
    let (w, h) = a.dims();
    let (ma, mb) = (a.mean(), b.mean());
    let mut out = vec![0.0; w * h];
    for sy in 0..h {
        for sx in 0..w {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += (a.get(x, y) - ma) * (b.get((x + sx) % w, (y + sy) % h) - mb);
                }
            }
            out[sy * w + sx] = s;
        }
    }
    out
}

pub fn correlation_brute_force(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=32, 1usize..=32, any::<u64>()), |(w, h, seed)| {
        let (a, b) = (noise(w, h, seed), noise(w, h, seed ^ 0xabc));
        let fast = cross_correlate(&a, &b).unwrap();
        for (u, v) in fast.values().iter().zip(brute_correlation(&a, &b)) {
            prop_assert!((u - v).abs() <= 1e-6);
        }
        Ok(())
    })
}

pub fn pce_scale_invariant(cases: u32) -> Result<(), String> {
    check(cases, (12usize..40, 12usize..40, any::<u64>(), -3.0..3.0f64), |(w, h, seed, e)| {
        let s = CorrelationSurface::new(w, h, noise(w, h, seed).into_data()).unwrap();
        let alpha = 10f64.powf(e);
        let (p, q) = (pce(&s, 5).unwrap(), pce(&s.scaled(alpha), 5).unwrap());
        prop_assert!(close(p.pce, q.pce, 1e-9));
        prop_assert_eq!(p.peak_location, q.peak_location);
        Ok(())
    })
}

pub fn pce_coshift_invariant(cases: u32) -> Result<(), String> {
    check(cases, (16usize..48, 16usize..48, any::<u64>(), -20isize..20, -20isize..20), |(w, h, seed, dx, dy)| {
        let a = noise(w, h, seed);
        let b = a.zip_map(&noise(w, h, seed ^ 7), |x, n| x + 0.5 * n).unwrap();
        let p = pce(&cross_correlate(&a, &b).unwrap(), 5).unwrap();
        let q = pce(
            &cross_correlate(&a.circular_shift(dx, dy), &b.circular_shift(dx, dy)).unwrap(),
            5,
        )
        .unwrap();
        prop_assert!(close(p.pce, q.pce, 1e-9));
        Ok(())
    })
}

pub fn p_value_monotone(cases: u32) -> Result<(), String> {
    check(cases, (0.0..1e6f64, 0.0..1e6f64, 2usize..100_000), |(x, y, area)| {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(p_value(lo, area) >= p_value(hi, area));
        let p = p_value(lo, area);
        prop_assert!((0.0..=0.5).contains(&p));
        Ok(())
    })
}

pub fn align_recovers_shift(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), -6isize..=6, -6isize..=6), |(seed, dx, dy)| {
        let a = noise(48, 40, seed);
        let b = a.circular_shift(dx, dy);
        let al = align_planes(&a, &b, 8).unwrap();
        prop_assert_eq!((al.dx, al.dy), (dx, dy));
        prop_assert!(al.ncc > 1.0 - 1e-12);
        Ok(())
    })
}

// --- localization ---------------------------------------------------------------

pub fn grid_dimensions(cases: u32) -> Result<(), String> {
    check(cases, (12usize..48, 12usize..48, 0.0..1.0f64, 1usize..20, any::<u64>()), |(w, h, t, stride, seed)| {
        let window = 12 + (t * (w.min(h) - 12) as f64) as usize;
        let img = uniform(w, h, seed, 0.2, 0.8);
        let res = NoiseResidual { plane: noise(w, h, seed ^ 3), source_id: String::new() };
        let fp = Fingerprint::new(noise(w, h, seed ^ 5), "c", "p", 1).unwrap();
        let map = pce_map(&img, &res, &fp, window, stride).unwrap();
        prop_assert_eq!(map.rows, (h - window) / stride + 1);
        prop_assert_eq!(map.cols, (w - window) / stride + 1);
        prop_assert_eq!(map.values.len(), map.rows * map.cols);
        Ok(())
    })
}

pub fn probability_order(cases: u32) -> Result<(), String> {
    let values = proptest::collection::vec(-100.0..1e4f64, 1..64);
    check(cases, (values, 8usize..256), |(values, window)| {
        let map = HeatMap { rows: 1, cols: values.len(), window, stride: 1, values };
        let prob = probability_map(&map);
        for i in 0..map.values.len() {
            prop_assert!((0.0..=1.0).contains(&prob.values[i]));
            for j in 0..map.values.len() {
                if map.values[i] > map.values[j] {
                    prop_assert!(prob.values[i] <= prob.values[j]);
                }
            }
        }
        Ok(())
    })
}

/// Host image from one sensor with a square from another sensor pasted in,
/// plus the host camera's fingerprint. Returns the probability map and the
/// splice square `(x0, size)`.
pub fn splice_case(seed: u64, size: usize, splice: usize, window: usize, stride: usize, count: usize) -> (HeatMap, usize) {
    let roster = prnu_core::harness::default_roster();
    let pipeline = &roster[1];
    let host = synth_sensor(SensorParams::new("host", size, size, seed)).unwrap();
    let donor = synth_sensor(SensorParams::new("donor", size, size, seed ^ 0xd0)).unwrap();
    let den = DenoiserSpec::default();
    let shot = |sensor: &prnu_core::ispsim::SensorProfile, i: u64| {
        let scene = synth_scene(size, size, SceneKind::Texture, seed * 1000 + i).unwrap();
        to_luminance(&develop(&capture(&scene, sensor, i).unwrap(), pipeline).unwrap())
    };
    let imgs: Vec<_> = (0..count as u64).map(|i| shot(&host, i + 1)).collect();
    let res: Vec<_> = imgs.iter().map(|i| residual(i, &den).unwrap()).collect();
    let fp = clean_fingerprint(&estimate_fingerprint(&imgs, &res).unwrap());

    let authentic = shot(&host, 900);
    let foreign = shot(&donor, 901);
    let x0 = (size - splice) / 2;
    let inside = |v: usize| (x0..x0 + splice).contains(&v);
    let forged = ImagePlane::from_fn(size, size, |x, y| {
        if inside(x) && inside(y) {
            foreign.get(x, y)
        } else {
            authentic.get(x, y)
        }
    });
    let r = residual(&forged, &den).unwrap();
    let map = pce_map(&forged, &r, &fp, window, stride).unwrap();
    (probability_map(&map), x0)
}

/// Mean probability over windows fully inside and fully outside the square.
pub fn inside_outside(map: &HeatMap, x0: usize, splice: usize) -> (f64, f64) {
    let (mut inn, mut out) = (Vec::new(), Vec::new());
    for r in 0..map.rows {
        for c in 0..map.cols {
            let (x, y) = map.origin(r, c);
            let w = map.window;
            let within = |v: usize| v >= x0 && v + w <= x0 + splice;
            let disjoint = |v: usize| v + w <= x0 || v >= x0 + splice;
            if within(x) && within(y) {
                inn.push(map.get(r, c));
            } else if disjoint(x) || disjoint(y) {
                out.push(map.get(r, c));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&inn), mean(&out))
}

pub fn splice_fixture(cases: u32) -> Result<(), String> {
    // Whole-pipeline fixtures are costly; a handful of seeds suffices.
    check(cases.min(4), any::<u64>(), |seed| {
        let seed = seed % 10_000;
        let (map, x0) = splice_case(seed, 192, 96, 48, 24, 8);
        let (inside, outside) = inside_outside(&map, x0, 96);
        prop_assert!(inside > outside, "inside {inside} outside {outside}");
        Ok(())
    })
}

// --- ispsim -------------------------------------------------------------------

pub fn simulator_deterministic(cases: u32) -> Result<(), String> {
    let roster = prnu_core::harness::default_roster();
    check(cases, (any::<u64>(), any::<u64>(), 0..roster.len()), |(sensor_seed, shot_seed, p)| {
        let make = || {
            let sensor = synth_sensor(SensorParams::new("s", 64, 64, sensor_seed)).unwrap();
            let scene = synth_scene(64, 64, SceneKind::Texture, shot_seed).unwrap();
            let raw = capture(&scene, &sensor, shot_seed).unwrap();
            let out = develop(&raw, &roster[p]).unwrap();
            (raw, out)
        };
        prop_assert_eq!(make(), make());
        Ok(())
    })
}

// --- harness ------------------------------------------------------------------

fn scores() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((0u32..40).prop_map(|v| v as f64 * 0.5), 1..60)
}

pub fn roc_monotone(cases: u32) -> Result<(), String> {
    check(cases, (scores(), scores()), |(pos, neg)| {
        let c = roc(&pos, &neg).unwrap();
        prop_assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        prop_assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        prop_assert!((0.0..=1.0).contains(&c.auc));
        Ok(())
    })
}

/// Fraction of (pos, neg) pairs won by the positive; ties count half.
pub fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            wins += match p.partial_cmp(n).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn auc_mann_whitney(cases: u32) -> Result<(), String> {
    check(cases, (scores(), scores()), |(pos, neg)| {
        let c = roc(&pos, &neg).unwrap();
        prop_assert!((c.auc - mann_whitney(&pos, &neg)).abs() <= 1e-9);
        Ok(())
    })
}

pub fn dataset_deterministic(cases: u32) -> Result<(), String> {
    // Writes images to disk; a few seeds suffice.
    check(cases.min(3), any::<u64>(), |seed| {
        let mut exp = Experiment::desk(seed, 64, 1);
        exp.cameras.truncate(1);
        exp.pipelines.truncate(2);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m1 = build_dataset(&exp, a.path()).unwrap();
        let m2 = exec::sequential(|| build_dataset(&exp, b.path())).unwrap();
        prop_assert_eq!(manifest_hash(&m1).unwrap(), manifest_hash(&m2).unwrap());
        Ok(())
    })
}
