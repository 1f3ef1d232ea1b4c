//! Command-line front end: simulation, enhancement, training, extraction,
//! correction, benchmarking, and focus-metric reporting over PGM images and
//! JSON configs. Errors exit nonzero with a JSON record on stderr. The
//! `AXISCAL_SEED` environment variable overrides every seed input for
//! reproducible CI runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use axiscal::correction::{
    correction_loop, CorrectionConfig, CorrectionError, FullImageParams, ObservationMode,
    RigConfig, RigState,
};
use axiscal::dehaze::{DehazeError, DehazeParams};
use axiscal::focus::{
    metric_sensitivity_report, smd2, FocusError, FocusStack, MetricKind,
};
use axiscal::mdcnet::{
    build_dataset, grad_check, load_weights, save_weights, train, MdcError, MdcNet, TrainConfig,
};
use axiscal::optics::{
    generate_scenes, gaussian_blur, render_crosshair, AsphericSurface, DegradeSpec, OpticsError,
    SceneSpec, VisionSystem,
};
use axiscal::pipeline::{
    aea_dispatch, bench_report, bench_rows_csv, bench_summary_csv, extract_center, AeaConfig,
    BenchConfig, BenchMethod, PipelineError,
};
use axiscal::raster::{
    read_pgm, write_pgm, GrayImage, RasterError, Roi, ThresholdParams,
};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Focus(#[from] FocusError),
    #[error(transparent)]
    Dehaze(#[from] DehazeError),
    #[error(transparent)]
    Net(#[from] MdcError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Optics(_) => "optics",
            CliError::Raster(_) => "raster",
            CliError::Focus(_) => "focus",
            CliError::Dehaze(_) => "dehaze",
            CliError::Net(_) => "mdcnet",
            CliError::Pipeline(_) => "pipeline",
            CliError::Correction(_) => "correction",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Usage(_) => "usage",
        }
    }
}

/// Crosshair-based eccentricity measurement and correction toolkit.
#[derive(Debug, Parser)]
#[command(name = "axiscal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render synthetic crosshair scenes and write PGMs plus a ground-truth
    /// sidecar JSON.
    Simulate(SimulateArgs),
    /// Enhance one PGM image and print a CSV record of the sharpness change.
    Enhance(EnhanceArgs),
    /// Train enhancement-network weights on simulated scenes.
    Train(TrainArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Extract the crosshair center from a PGM image.
    Extract(ExtractArgs),
    /// Run the closed-loop eccentricity correction on the simulated rig.
    Correct(CorrectArgs),
    /// Time enhancement methods over a synthetic corpus.
    Bench(BenchArgs),
    /// Score focus metrics across an image stack and rank their sensitivity.
    Metrics(MetricsArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
        eprintln!("{record}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Enhance(args) => enhance(args),
        Command::Train(args) => run_train(args),
        Command::Gradcheck(args) => gradcheck(args),
        Command::Extract(args) => extract(args),
        Command::Correct(args) => correct(args),
        Command::Bench(args) => bench(args),
        Command::Metrics(args) => metrics(args),
    }
}

/// Seed override for CI determinism; present and invalid is an error.
fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("AXISCAL_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("AXISCAL_SEED must be a u64, got {text:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("AXISCAL_SEED: {e}"))),
    }
}

fn parse_roi(text: &str) -> Result<Roi, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err("expected x0,y0,width,height".into());
    }
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse::<usize>()).collect();
    let nums = nums.map_err(|e| e.to_string())?;
    Ok(Roi {
        x0: nums[0],
        y0: nums[1],
        width: nums[2],
        height: nums[3],
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON file with scene, severity, count, seed, and surface fields; all
    /// optional. Flags override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the PGM images and truth.json sidecar.
    #[arg(long, default_value = "scenes")]
    out_dir: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Benchmark surface preset (s1..s7) whose aberration summary is added
    /// to the sidecar.
    #[arg(long)]
    surface: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    scene: SceneSpec,
    severity: DegradeSpec,
    count: usize,
    seed: u64,
    surface: Option<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            severity: DegradeSpec::default_severity(),
            count: 3,
            seed: 0,
            surface: None,
        }
    }
}

fn lookup_surface(name: &str) -> Result<AsphericSurface, CliError> {
    AsphericSurface::presets()
        .into_iter()
        .find(|(key, _)| *key == name)
        .map(|(_, s)| s)
        .ok_or_else(|| {
            let names: Vec<&str> = AsphericSurface::presets().iter().map(|(k, _)| *k).collect();
            CliError::Usage(format!("unknown surface {name:?}; presets: {}", names.join(", ")))
        })
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => SimulateConfig::default(),
    };
    if let Some(count) = args.count {
        cfg.count = count;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.surface.is_some() {
        cfg.surface = args.surface.clone();
    }
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }

    let surface_summary = match &cfg.surface {
        Some(name) => {
            let surface = lookup_surface(name)?;
            let system = VisionSystem::default().validated()?;
            Some(serde_json::json!({
                "name": name,
                "r0_mm": surface.r0(),
                "k": surface.k(),
                "clear_radius_mm": surface.clear_radius(&system)?,
            }))
        }
        None => None,
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let scenes = generate_scenes(cfg.count, cfg.seed, &cfg.scene, &cfg.severity)?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let sharp_name = format!("scene_{i:03}_sharp.pgm");
        let degraded_name = format!("scene_{i:03}_degraded.pgm");
        write_pgm(args.out_dir.join(&sharp_name), &scene.sharp)?;
        write_pgm(args.out_dir.join(&degraded_name), &scene.degraded)?;
        entries.push(serde_json::json!({
            "index": i,
            "sharp": sharp_name,
            "degraded": degraded_name,
            "center": [scene.truth.center.0, scene.truth.center.1],
        }));
    }
    let sidecar = serde_json::json!({
        "seed": cfg.seed,
        "scene": cfg.scene,
        "severity": cfg.severity,
        "surface": surface_summary,
        "scenes": entries,
    });
    let sidecar_path = args.out_dir.join("truth.json");
    std::fs::write(&sidecar_path, format!("{sidecar:#}\n"))?;
    println!(
        "{}",
        serde_json::json!({
            "scenes": cfg.count,
            "dir": args.out_dir,
            "truth": sidecar_path,
        })
    );
    Ok(())
}

// ----------------------------------------------------------------- enhance

#[derive(Debug, Args)]
struct EnhanceArgs {
    /// gfa, mdcnet, maxmin, or auto (sharpness-routed dispatch).
    #[arg(long)]
    method: String,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Weights JSON; required for mdcnet, optional for auto.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    b_const: f64,
    #[arg(long, default_value_t = 7)]
    patch_radius: usize,
    #[arg(long, default_value_t = 30)]
    gf_radius: usize,
    #[arg(long, default_value_t = 1e-3)]
    gf_eps: f64,
    /// Guided-filter subsampling factor; 1 is exact.
    #[arg(long, default_value_t = 1)]
    subsample: usize,
}

fn enhance(args: EnhanceArgs) -> Result<(), CliError> {
    let img = read_pgm(&args.input)?;
    let params = DehazeParams {
        patch_radius: args.patch_radius,
        gf_radius: args.gf_radius,
        gf_eps: args.gf_eps,
        subsample_s: args.subsample,
        ..Default::default()
    }
    .validated()?;
    let weights = args.weights.as_deref().map(load_weights).transpose()?;
    let before = smd2(&img)?;

    let start = Instant::now();
    let (out, label) = match args.method.as_str() {
        "gfa" => (axiscal::dehaze::gfa_enhance(&img, &params), "gfa"),
        "maxmin" => (axiscal::dehaze::max_min_stretch(&img), "maxmin"),
        "mdcnet" => {
            let net = weights
                .as_ref()
                .ok_or_else(|| CliError::Usage("mdcnet needs --weights".into()))?;
            (axiscal::mdcnet::enhance(net, &img, args.b_const)?, "mdcnet")
        }
        "auto" => {
            let cfg = AeaConfig {
                dehaze_params: params,
                weights,
                b_const: args.b_const,
                ..Default::default()
            };
            let (out, path) = aea_dispatch(&img, &cfg)?;
            (out, path.label())
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown method {other:?}; expected gfa, mdcnet, maxmin, or auto"
            )))
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let after = smd2(&out)?;
    write_pgm(&args.output, &out)?;
    println!("{label},{before:.6},{after:.6},{wall_ms:.3}");
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Debug, Args)]
struct TrainArgs {
    /// Output weights JSON.
    #[arg(long, default_value = "weights.json")]
    out: PathBuf,
    /// Optional per-epoch loss CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    scene_count: usize,
    #[arg(long, default_value_t = 100)]
    pair_count: usize,
    #[arg(long, default_value_t = 64)]
    roi_size: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    batch_size: usize,
    #[arg(long, default_value_t = 4e-4)]
    lr_start: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_end: f64,
    #[arg(long, default_value_t = 0.99)]
    momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    b_const: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let seed = env_seed()?.unwrap_or(args.seed);
    let scenes = generate_scenes(
        args.scene_count,
        seed,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )?;
    let data = build_dataset(
        &scenes,
        args.pair_count,
        args.roi_size,
        &DehazeParams::default(),
        seed,
    )?;
    let mut net = MdcNet::glorot(seed);
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr_start: args.lr_start,
        lr_end: args.lr_end,
        momentum: args.momentum,
        b_const: args.b_const,
        seed,
    };
    let history = train(&mut net, &data, &cfg)?;
    save_weights(&net, &args.out)?;
    if let Some(path) = &args.history {
        let mut csv = String::from("epoch,loss\n");
        for (epoch, loss) in history.iter().enumerate() {
            csv.push_str(&format!("{epoch},{loss:.9}\n"));
        }
        std::fs::write(path, csv)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "weights": args.out,
            "params": net.param_count(),
            "pairs": data.len(),
            "epochs": args.epochs,
            "first_loss": history.first(),
            "final_loss": history.last(),
        })
    );
    Ok(())
}

// --------------------------------------------------------------- gradcheck

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Side of the square training crops.
    #[arg(long, default_value_t = 8)]
    size: usize,
    /// Number of independent (network, crop) trials.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Minimum parameters checked per trial.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    b_const: f64,
    /// Fail (nonzero exit) if the worst relative error exceeds this.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let seed = env_seed()?.unwrap_or(args.seed);
    let scenes = generate_scenes(
        args.trials.max(1),
        seed,
        &SceneSpec::default(),
        &DegradeSpec::default_severity(),
    )?;
    // Tiny crops need a correspondingly tiny enhancement window.
    let params = DehazeParams {
        patch_radius: 2,
        gf_radius: 2,
        ..Default::default()
    };
    let pairs = build_dataset(&scenes, args.trials, args.size, &params, seed)?;
    let mut worst = 0.0f64;
    let mut per_trial = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let net = MdcNet::glorot(seed.wrapping_add(i as u64));
        let err = grad_check(&net, pair, args.b_const, args.epsilon, args.samples, seed)?;
        per_trial.push(err);
        worst = worst.max(err);
    }
    let pass = worst <= args.threshold;
    println!(
        "{}",
        serde_json::json!({
            "trials": per_trial,
            "worst_rel_error": worst,
            "threshold": args.threshold,
            "pass": pass,
        })
    );
    if !pass {
        return Err(CliError::Usage(format!(
            "worst gradient error {worst:.3e} exceeds {:.3e}",
            args.threshold
        )));
    }
    Ok(())
}

// ----------------------------------------------------------------- extract

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    /// Crop to extract from, as x0,y0,width,height; the reported center is
    /// still in full-image coordinates. Default: whole image.
    #[arg(long, value_parser = parse_roi)]
    roi: Option<Roi>,
    /// Threshold window side; must dwarf the crosshair stroke width.
    #[arg(long, default_value_t = 115)]
    ksize: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    offset_c: f64,
    #[arg(long, default_value_t = 3)]
    se: usize,
}

fn extract(args: ExtractArgs) -> Result<(), CliError> {
    let img = read_pgm(&args.input)?;
    let roi = args.roi.unwrap_or(Roi {
        x0: 0,
        y0: 0,
        width: img.width(),
        height: img.height(),
    });
    let crop = img.crop(&roi)?;
    let thr = ThresholdParams::new(args.ksize, args.offset_c)?;
    let (x, y) = extract_center(&crop, &roi, &thr, args.se)?;
    println!(
        "{}",
        serde_json::json!({
            "x": x,
            "y": y,
            "roi": [roi.x0, roi.y0, roi.width, roi.height],
        })
    );
    Ok(())
}

// ----------------------------------------------------------------- correct

#[derive(Debug, Args)]
struct CorrectArgs {
    /// JSON file with rig and loop fields; flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the log CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ecc_x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ecc_y: f64,
    #[arg(long, default_value_t = 0.0)]
    obs_noise_px: f64,
    #[arg(long, default_value_t = 0.0)]
    act_noise_um: f64,
    #[arg(long, default_value_t = 1.375)]
    scale_um_per_px: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    steps: usize,
    /// Degrees per step; default spans one revolution.
    #[arg(long)]
    step_deg: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    threshold_um: f64,
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    /// Observe through rendering, degradation, and extraction instead of
    /// geometric points.
    #[arg(long)]
    full_image: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorrectFile {
    rig: RigConfig,
    #[serde(rename = "loop")]
    loop_cfg: CorrectionConfig,
}

fn correct(args: CorrectArgs) -> Result<(), CliError> {
    let (mut rig_cfg, loop_cfg) = match &args.config {
        Some(path) => {
            let file: CorrectFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            (file.rig, file.loop_cfg)
        }
        None => {
            let rig = RigConfig {
                ecc_um: (args.ecc_x, args.ecc_y),
                scale_um_per_px: args.scale_um_per_px,
                obs_noise_px: args.obs_noise_px,
                act_noise_um: args.act_noise_um,
                seed: args.seed,
                ..Default::default()
            };
            let mode = if args.full_image {
                ObservationMode::FullImage(FullImageParams::default())
            } else {
                ObservationMode::Point
            };
            let loop_cfg = CorrectionConfig {
                steps_per_rev: args.steps,
                step_deg: args
                    .step_deg
                    .unwrap_or(360.0 / args.steps.max(1) as f64),
                threshold_um: args.threshold_um,
                max_iter: args.max_iter,
                mode,
            };
            (rig, loop_cfg)
        }
    };
    if let Some(seed) = env_seed()? {
        rig_cfg.seed = seed;
    }
    let mut rig = RigState::new(rig_cfg)?;
    let log = correction_loop(&mut rig, &loop_cfg)?;
    let csv = log.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

// ------------------------------------------------------------------- bench

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated square image sides.
    #[arg(long, default_value = "100,200", value_delimiter = ',')]
    scales: Vec<usize>,
    /// Images per scale.
    #[arg(long, default_value_t = 3)]
    count: usize,
    /// Timed repetitions per cell (after one discarded warm-up).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Comma-separated subset of maxmin, gfa, fast-gfa, mdcnet.
    #[arg(long, default_value = "maxmin,gfa,fast-gfa", value_delimiter = ',')]
    methods: Vec<String>,
    /// Weights JSON; required when methods include mdcnet.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print per-(method, scale) means instead of raw rows.
    #[arg(long)]
    summary: bool,
}

fn parse_method(name: &str) -> Result<BenchMethod, CliError> {
    match name {
        "maxmin" => Ok(BenchMethod::MaxMin),
        "gfa" => Ok(BenchMethod::Gfa),
        "fast-gfa" => Ok(BenchMethod::FastGfa),
        "mdcnet" => Ok(BenchMethod::MdcNet),
        other => Err(CliError::Usage(format!(
            "unknown method {other:?}; expected maxmin, gfa, fast-gfa, or mdcnet"
        ))),
    }
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    let seed = env_seed()?.unwrap_or(args.seed);
    let methods: Vec<BenchMethod> = args
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<_, _>>()?;
    let mut corpus = Vec::new();
    for (i, &scale) in args.scales.iter().enumerate() {
        let base = SceneSpec {
            image_w: scale,
            image_h: scale,
            center: (scale as f64 / 2.0, scale as f64 / 2.0),
            ..Default::default()
        };
        let scenes = generate_scenes(
            args.count,
            seed.wrapping_add(i as u64),
            &base,
            &DegradeSpec::default_severity(),
        )?;
        corpus.extend(scenes.into_iter().map(|s| s.degraded));
    }
    let cfg = BenchConfig {
        weights: args.weights.as_deref().map(load_weights).transpose()?,
        repetitions: args.reps,
        ..Default::default()
    };
    let rows = bench_report(&corpus, &methods, &cfg)?;
    if args.summary {
        print!("{}", bench_summary_csv(&rows));
    } else {
        print!("{}", bench_rows_csv(&rows));
    }
    Ok(())
}

// ----------------------------------------------------------------- metrics

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Directory of PGM slices, ordered by filename. Omit to score a
    /// synthesized defocus ladder.
    #[arg(long)]
    stack: Option<PathBuf>,
    /// Scoring window as x0,y0,width,height. Default: whole frame.
    #[arg(long, value_parser = parse_roi)]
    roi: Option<Roi>,
    #[arg(long, default_value_t = 10.0)]
    axial_step_um: f64,
    /// Slices in the synthesized ladder.
    #[arg(long, default_value_t = 15)]
    slices: usize,
}

fn read_stack_dir(dir: &Path) -> Result<Vec<GrayImage>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("pgm")))
        .collect();
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no .pgm files in {}", dir.display())));
    }
    paths.sort();
    paths.iter().map(|p| Ok(read_pgm(p)?)).collect()
}

fn synthesized_ladder(slices: usize) -> Result<Vec<GrayImage>, CliError> {
    let (sharp, _) = render_crosshair(&SceneSpec::default())?;
    let mid = slices / 2;
    Ok((0..slices)
        .map(|i| {
            let away = (i as f64 - mid as f64).abs();
            gaussian_blur(&sharp, 0.8 * away)
        })
        .collect())
}

fn metrics(args: MetricsArgs) -> Result<(), CliError> {
    let images = match &args.stack {
        Some(dir) => read_stack_dir(dir)?,
        None => synthesized_ladder(args.slices)?,
    };
    let (w, h) = (images[0].width(), images[0].height());
    let stack = FocusStack::new(images, args.axial_step_um)?;
    let roi = args.roi.unwrap_or(Roi {
        x0: 0,
        y0: 0,
        width: w,
        height: h,
    });
    let report = metric_sensitivity_report(&stack, &roi, &MetricKind::ALL)?;
    print!("{}", report.to_csv());
    Ok(())
}
