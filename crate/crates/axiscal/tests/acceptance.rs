//! End-to-end acceptance checks, one test per release gate. Each test body
//! states its numeric contract and asserts its own runtime budget.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use axiscal::correction::{correction_loop, fit_circle, CorrectionConfig, RigConfig, RigState};
use axiscal::dehaze::{
    gfa_enhance, guided_filter, recover, DehazeParams, TransmissionMap,
};
use axiscal::focus::{bdma, smd2, BlockSearchParams};
use axiscal::mdcnet::{self, build_dataset, grad_check, train, MdcNet, TrainConfig};
use axiscal::optics::{
    degrade, generate_scenes, AsphericSurface, DegradeSpec, SceneSpec, VisionSystem,
};
use axiscal::pipeline::{bench_report, route_for_smd2, AeaConfig, BenchConfig, BenchMethod, EnhancePath};
use axiscal::raster::GrayImage;

fn assert_within_budget(start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "ran {elapsed:?}, budget {budget:?}"
    );
}

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..1.0)).unwrap()
}

#[test]
fn a01_paraboloid_aberration_and_clear_radius() {
    let start = Instant::now();
    let surface = AsphericSurface::paraboloid(18.281);
    let delta = surface.normal_aberration(1.0027).unwrap();
    let rel = (delta - 0.0275).abs() / 0.0275;
    assert!(rel <= 1e-4, "normal aberration {delta} mm, relative error {rel}");
    let radius = surface.clear_radius(&VisionSystem::default()).unwrap();
    assert!(
        (radius - 1.0027).abs() <= 0.001,
        "clear radius {radius} mm"
    );
    assert_within_budget(start, Duration::from_secs(1));
}

#[test]
fn a02_field_of_view_defaults() {
    let start = Instant::now();
    let (w, h) = VisionSystem::default().field_of_view_mm();
    assert!((w - 4.532).abs() <= 0.001, "fov width {w} mm");
    assert!((h - 3.399).abs() <= 0.001, "fov height {h} mm");
    assert_within_budget(start, Duration::from_secs(1));
}

#[test]
fn a03_guided_filter_matches_windowed_regression() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let side = 64usize;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let guide = random_image(side, side, &mut rng);
        let input = random_image(side, side, &mut rng);
        for radius in [4usize, 8, 16] {
            for eps in [1e-4, 1e-3, 1e-2] {
                let q = guided_filter(&guide, &input, radius, eps, 1).unwrap();

                // Per-window regression coefficients, then the mean of the
                // coefficients over every window covering each pixel;
                // windows clamp at borders and renormalize.
                let mut a_map = vec![0.0f64; side * side];
                let mut b_map = vec![0.0f64; side * side];
                for y in 0..side {
                    for x in 0..side {
                        let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(side - 1));
                        let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(side - 1));
                        let (mut si, mut sp, mut sii, mut sip, mut n) =
                            (0.0, 0.0, 0.0, 0.0, 0.0);
                        for yy in y0..=y1 {
                            for xx in x0..=x1 {
                                let (i, p) = (guide.get(xx, yy), input.get(xx, yy));
                                si += i;
                                sp += p;
                                sii += i * i;
                                sip += i * p;
                                n += 1.0;
                            }
                        }
                        let (mi, mp) = (si / n, sp / n);
                        let a = (sip / n - mi * mp) / ((sii / n - mi * mi) + eps);
                        a_map[y * side + x] = a;
                        b_map[y * side + x] = mp - a * mi;
                    }
                }
                for y in 0..side {
                    for x in 0..side {
                        let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(side - 1));
                        let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(side - 1));
                        let (mut sa, mut sb, mut n) = (0.0, 0.0, 0.0);
                        for yy in y0..=y1 {
                            for xx in x0..=x1 {
                                sa += a_map[yy * side + xx];
                                sb += b_map[yy * side + xx];
                                n += 1.0;
                            }
                        }
                        let expected = sa / n * guide.get(x, y) + sb / n;
                        worst = worst.max((q.get(x, y) - expected).abs());
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-6, "max abs error {worst}");
    assert_within_budget(start, Duration::from_secs(30));
}

#[test]
fn a04_degrade_recover_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = rng.random_range(8..64);
        let h = rng.random_range(8..64);
        let source = random_image(w, h, &mut rng);
        let t = rng.random_range(0.15..1.0);
        let a = rng.random_range(0.2..1.0);
        let degraded = degrade(
            &source,
            &DegradeSpec {
                t_value: t,
                a_value: a,
                psf_sigma: 0.0,
                noise_sigma: 0.0,
                seed: 0,
            },
        );
        let map = TransmissionMap::new(GrayImage::filled(w, h, t).unwrap(), 0.1);
        let recovered = recover(&degraded, &map, a).unwrap();
        for (&got, &want) in recovered.samples().iter().zip(source.samples()) {
            worst = worst.max((got - want).abs());
        }
    }
    assert!(worst <= 1e-9, "round-trip error {worst}");
    assert_within_budget(start, Duration::from_secs(10));
}

#[test]
fn a05_enhancement_raises_sharpness_tenfold() {
    let start = Instant::now();
    let scenes = generate_scenes(
        20,
        1405,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )
    .unwrap();
    let params = DehazeParams::default();
    for (i, scene) in scenes.iter().enumerate() {
        let before = smd2(&scene.degraded).unwrap();
        let after = smd2(&gfa_enhance(&scene.degraded, &params)).unwrap();
        assert!(
            after >= 10.0 * before,
            "scene {i}: {before} -> {after}, ratio {}",
            after / before
        );
    }
    assert_within_budget(start, Duration::from_secs(60));
}

#[test]
fn a06_gradient_check() {
    let start = Instant::now();
    let scenes = generate_scenes(
        5,
        606,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )
    .unwrap();
    // Tiny crops need a correspondingly tiny enhancement window.
    let params = DehazeParams {
        patch_radius: 2,
        gf_radius: 2,
        ..Default::default()
    };
    let pairs = build_dataset(&scenes, 5, 8, &params, 606).unwrap();
    for (seed, pair) in pairs.iter().enumerate() {
        let net = MdcNet::glorot(seed as u64);
        let worst = grad_check(&net, pair, 1.0, 1e-5, 200, seed as u64).unwrap();
        assert!(worst <= 1e-5, "seed {seed}: max relative error {worst}");
    }
    assert_within_budget(start, Duration::from_secs(60));
}

#[test]
fn a07_architecture_arithmetic() {
    let start = Instant::now();
    let net = MdcNet::zeros();
    let (params, macs) = net.model_stats(200, 200);
    assert_eq!(params, 1978);
    assert_eq!(macs, 85_080_000);
    assert_within_budget(start, Duration::from_secs(1));
}

#[test]
fn a08_scaled_training_converges_and_generalizes() {
    let start = Instant::now();
    let scenes = generate_scenes(
        20,
        42,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )
    .unwrap();
    let data = build_dataset(&scenes, 100, 64, &DehazeParams::default(), 42).unwrap();
    let mut net = MdcNet::glorot(42);
    let cfg = TrainConfig {
        epochs: 30,
        seed: 42,
        ..Default::default()
    };
    let history = train(&mut net, &data, &cfg).unwrap();
    let (first, last) = (history[0], *history.last().unwrap());
    assert!(
        last < 0.5 * first,
        "loss went {first} -> {last}, reduction {}",
        last / first
    );

    let held_out = generate_scenes(
        10,
        4242,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )
    .unwrap();
    let improved = held_out
        .iter()
        .filter(|scene| {
            let out = mdcnet::enhance(&net, &scene.degraded, cfg.b_const).unwrap();
            smd2(&out).unwrap() > smd2(&scene.degraded).unwrap()
        })
        .count();
    assert!(improved >= 9, "sharpness improved on {improved}/10 held-out scenes");
    assert_within_budget(start, Duration::from_secs(15 * 60));
}

#[test]
fn a09_circle_fit_exact_and_noisy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..100 {
        let cx = rng.random_range(-100.0..100.0);
        let cy = rng.random_range(-100.0..100.0);
        let r = rng.random_range(5.0..100.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let phi = phase + std::f64::consts::TAU * k as f64 / 12.0;
                (cx + r * phi.cos(), cy + r * phi.sin())
            })
            .collect();
        let fit = fit_circle(&pts).unwrap();
        let scale = r.abs().max(1.0);
        assert!((fit.cx - cx).abs() / scale <= 1e-9);
        assert!((fit.cy - cy).abs() / scale <= 1e-9);
        assert!((fit.r - r).abs() / scale <= 1e-9);
    }

    fn noise(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(rand_distr::StandardNormal)
    }
    let mut errors: Vec<f64> = (0..1000)
        .map(|_| {
            let pts: Vec<(f64, f64)> = (0..12)
                .map(|k| {
                    let phi = std::f64::consts::TAU * k as f64 / 12.0;
                    (
                        100.0 + 40.0 * phi.cos() + 0.5 * noise(&mut rng),
                        50.0 + 40.0 * phi.sin() + 0.5 * noise(&mut rng),
                    )
                })
                .collect();
            let fit = fit_circle(&pts).unwrap();
            ((fit.cx - 100.0).powi(2) + (fit.cy - 50.0).powi(2)).sqrt()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = errors[500];
    assert!(median <= 0.5, "median center error {median} px");
    assert_within_budget(start, Duration::from_secs(30));
}

#[test]
fn a10_closed_loop_convergence() {
    let start = Instant::now();

    // Noise-free: one corrective move lands on the axis.
    let mut rig = RigState::new(RigConfig {
        ecc_um: (-171.0, 228.0), // |ecc| = 285 exactly
        ..Default::default()
    })
    .unwrap();
    let log = correction_loop(&mut rig, &CorrectionConfig::default()).unwrap();
    assert!(log.terminated);
    assert_eq!(log.moves(), 1);
    let residual = (rig.ecc_um.0.powi(2) + rig.ecc_um.1.powi(2)).sqrt();
    assert!(residual < 0.01, "noise-free residual {residual} um");

    // Noisy preset: 100 seeded runs from random directions.
    let cfg = CorrectionConfig {
        max_iter: 5,
        ..Default::default()
    };
    let mut master = ChaCha8Rng::seed_from_u64(1010);
    let mut successes = 0;
    for run in 0..100u64 {
        let theta: f64 = master.random_range(0.0..std::f64::consts::TAU);
        let mut rig = RigState::new(RigConfig {
            ecc_um: (285.0 * theta.cos(), 285.0 * theta.sin()),
            obs_noise_px: 0.5,
            act_noise_um: 5.0,
            seed: run,
            ..Default::default()
        })
        .unwrap();
        let log = correction_loop(&mut rig, &cfg).unwrap();
        let decreasing = log
            .records
            .windows(2)
            .all(|pair| pair[1].r_px < pair[0].r_px);
        if log.terminated && decreasing {
            successes += 1;
        }
    }
    assert!(successes >= 95, "{successes}/100 runs converged monotonically");
    assert_within_budget(start, Duration::from_secs(5 * 60));
}

#[test]
fn a11_block_search_hits_the_center() {
    let start = Instant::now();
    let base = SceneSpec {
        image_w: 256,
        image_h: 256,
        center: (128.0, 128.0),
        ..Default::default()
    };
    let scenes = generate_scenes(50, 1111, &base, &DegradeSpec::none()).unwrap();
    let params = BlockSearchParams {
        block_w: 64,
        block_h: 64,
        step_t: 32,
    };
    for (i, scene) in scenes.iter().enumerate() {
        let head = bdma(&scene.sharp, &params).unwrap().head().0;
        let (cx, cy) = scene.truth.center;
        assert!(
            head.x0 as f64 <= cx
                && cx < (head.x0 + head.width) as f64
                && head.y0 as f64 <= cy
                && cy < (head.y0 + head.height) as f64,
            "scene {i}: head {head:?} misses ({cx}, {cy})"
        );
    }
    assert_within_budget(start, Duration::from_secs(2 * 60));
}

#[test]
fn a12_dispatch_boundary_grid() {
    let start = Instant::now();
    let cfg = AeaConfig::default();
    let eps = 1e-9;
    let cases = [
        (0.1 - eps, EnhancePath::Gfa),
        (0.1, EnhancePath::Gfa),
        (0.1 + eps, EnhancePath::MdcNet),
        (0.5 - eps, EnhancePath::MdcNet),
        (0.5, EnhancePath::MdcNet),
        (0.5 + eps, EnhancePath::Direct),
        (0.02, EnhancePath::Gfa),
        (0.3, EnhancePath::MdcNet),
        (0.9, EnhancePath::Direct),
    ];
    for (value, want) in cases {
        assert_eq!(route_for_smd2(value, &cfg), want, "smd2 = {value}");
    }
    assert_within_budget(start, Duration::from_secs(10));
}

#[test]
fn a13_gfa_slower_than_network() {
    let start = Instant::now();
    let base = SceneSpec::default(); // 200 x 200
    let scenes = generate_scenes(10, 1313, &base, &DegradeSpec::default_severity()).unwrap();
    let corpus: Vec<GrayImage> = scenes.into_iter().map(|s| s.degraded).collect();
    let cfg = BenchConfig {
        weights: Some(MdcNet::glorot(0)),
        repetitions: 5,
        ..Default::default()
    };
    let rows = bench_report(&corpus, &[BenchMethod::Gfa, BenchMethod::MdcNet], &cfg).unwrap();
    let mean = |label: &str| {
        let group: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == label)
            .map(|r| r.wall_ms)
            .collect();
        group.iter().sum::<f64>() / group.len() as f64
    };
    let (gfa_ms, mdc_ms) = (mean("gfa"), mean("mdcnet"));
    assert!(
        gfa_ms > mdc_ms,
        "mean gfa {gfa_ms:.3} ms vs mean mdcnet {mdc_ms:.3} ms"
    );
    assert_within_budget(start, Duration::from_secs(2 * 60));
}

#[test]
fn a14_determinism() {
    // Training histories.
    let scenes = generate_scenes(
        2,
        14,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )
    .unwrap();
    let data = build_dataset(&scenes, 6, 16, &DehazeParams::default(), 14).unwrap();
    let run_training = || {
        let mut net = MdcNet::glorot(14);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 14,
            ..Default::default()
        };
        train(&mut net, &data, &cfg).unwrap()
    };
    assert_eq!(run_training(), run_training());

    // Simulator images.
    let render = || {
        generate_scenes(
            3,
            14,
            &SceneSpec::default(),
            &DegradeSpec::default_severity(),
        )
        .unwrap()
    };
    for (a, b) in render().iter().zip(&render()) {
        assert_eq!(a.sharp.samples(), b.sharp.samples());
        assert_eq!(a.degraded.samples(), b.degraded.samples());
    }

    // Correction logs.
    let run_loop = || {
        let mut rig = RigState::new(RigConfig {
            ecc_um: (200.0, -120.0),
            obs_noise_px: 0.5,
            act_noise_um: 5.0,
            seed: 14,
            ..Default::default()
        })
        .unwrap();
        correction_loop(&mut rig, &CorrectionConfig::default()).unwrap()
    };
    let (a, b) = (run_loop(), run_loop());
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}
