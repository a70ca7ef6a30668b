//! `worldtraj`: simulate scenes, recover trajectories, train the velocimeter
//! and evaluate results.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
//! 4 pipeline or training failure.

mod batch;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use worldtraj_core::depth::{CameraIntrinsics, IntrinsicSource};
use worldtraj_core::formats::{
    read_bundle, read_corpus, read_joint_sequence, read_trajectory, trajectories_to_csv, trajectory_from_csv,
    write_bundle, write_corpus, write_joint_sequence, write_trajectory, EhpsSettings, FormatError, SceneBundle,
    VoSettings,
};
use worldtraj_core::fusion::{run_pipeline, PipelineInput, PipelineOptions};
use worldtraj_core::metrics::{evaluate, EvaluationInput, DEFAULT_SEGMENT_LENGTH};
use worldtraj_core::shots::{Anchor, ShotKind};
use worldtraj_core::sim::{split_seed, CameraPlan, EhpsMode, MotionKind, MotionParams, SceneConfig, VONoiseModel};
use worldtraj_core::velocimeter::{
    default_corpus, load_model, save_model, train_velocimeter, CorpusConfig, LearnedVelocimeter, OracleVelocimeter,
    TrainConfig, VelocimeterError, VelocityEstimator, BASELINE_HELDOUT_MAE,
};
use worldtraj_core::{ScaleStatus, Trajectory};

const OUTPUT_ROOT_ENV: &str = "WORLDTRAJ_OUTPUT_ROOT";

#[derive(Debug, Error)]
enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Pipeline(_) => 4,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "worldtraj", version, about = "Absolute-scale human and camera trajectory recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scene and write a bundle.
    Simulate(SimulateArgs),
    /// Recover human and camera trajectories from one or more bundles.
    Run(RunArgs),
    /// Score estimates against ground truth.
    Eval(EvalArgs),
    /// Train the motion velocimeter on a corpus directory.
    TrainMv(TrainArgs),
    /// Generate the synthetic motion corpus.
    MakeCorpus(CorpusArgs),
    /// Write trajectories as CSV for plotting.
    Export(ExportArgs),
    /// Convert a CSV trajectory back to .traj.
    ImportCsv(ImportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShotArg {
    Composed,
    Static,
    Arc,
    Push,
    Pull,
    Tracking,
    Pan,
}

impl ShotArg {
    fn plan(self) -> CameraPlan {
        let single = |kind| CameraPlan::Single { kind };
        match self {
            ShotArg::Composed => CameraPlan::Composed,
            ShotArg::Static => CameraPlan::Static,
            ShotArg::Arc => single(ShotKind::Arc),
            ShotArg::Push => single(ShotKind::Push),
            ShotArg::Pull => single(ShotKind::Pull),
            ShotArg::Tracking => single(ShotKind::Tracking),
            ShotArg::Pan => single(ShotKind::Pan),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnchorArg {
    Pelvis,
    Neck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EhpsArg {
    Exact,
    Fitted,
}

#[derive(Debug, Args)]
struct VoNoiseArgs {
    /// VO translations are ground truth divided by this factor.
    #[arg(long, default_value_t = 1.0)]
    vo_scale: f64,
    /// Rotation noise, radians.
    #[arg(long, default_value_t = 0.0)]
    vo_rot_noise: f64,
    /// Translation noise, meters, before the scale corruption.
    #[arg(long, default_value_t = 0.0)]
    vo_trans_noise: f64,
    /// Drift per frame, meters.
    #[arg(long, default_value_t = 0.0)]
    vo_drift: f64,
}

impl VoNoiseArgs {
    fn model(&self) -> CliResult<VONoiseModel> {
        if !(self.vo_scale > 0.0 && self.vo_scale.is_finite()) {
            return Err(config_err(format!("--vo-scale must be positive, got {}", self.vo_scale)));
        }
        Ok(VONoiseModel {
            scale_factor: 1.0 / self.vo_scale,
            rotation_noise_sigma: self.vo_rot_noise,
            translation_noise_sigma: self.vo_trans_noise,
            drift_per_frame: self.vo_drift,
        })
    }

    fn is_default(&self) -> bool {
        self.vo_scale == 1.0 && self.vo_rot_noise == 0.0 && self.vo_trans_noise == 0.0 && self.vo_drift == 0.0
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "straight-walk")]
    motion: MotionKind,
    #[arg(long, value_enum, default_value = "composed")]
    shot: ShotArg,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[arg(long, env = "WORLDTRAJ_SEED", default_value_t = 0)]
    seed: u64,
    /// Bundle directory; with --count, the parent of seq_NNNN bundles.
    #[arg(long)]
    out: PathBuf,
    /// Walking or running speed override, m/s.
    #[arg(long)]
    speed: Option<f64>,
    /// Arc sweep in degrees, START:END.
    #[arg(long)]
    phi_range: Option<String>,
    /// Arc sweep step in degrees.
    #[arg(long)]
    dphi: Option<f64>,
    #[arg(long, value_enum, default_value = "pelvis")]
    anchor: AnchorArg,
    #[arg(long, default_value_t = 0)]
    companions: usize,
    /// Joint noise of the simulated EHPS output, meters.
    #[arg(long, default_value_t = 0.0)]
    joint_noise: f64,
    #[arg(long, value_enum, default_value = "exact")]
    ehps: EhpsArg,
    #[command(flatten)]
    vo: VoNoiseArgs,
    /// Number of sequences, seeded consecutively from --seed.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bundle directories.
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
    /// Output directory; defaults to BUNDLE/run. With several bundles each
    /// gets a subdirectory named after it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// exact, diagonal, or dummy[:FOCAL_PX].
    #[arg(long, default_value = "exact")]
    intrinsics: String,
    /// oracle, or the path of a trained model file.
    #[arg(long, default_value = "oracle")]
    velocimeter: String,
    /// bundle, simulate, or the path of a .traj file.
    #[arg(long, default_value = "bundle")]
    vo: String,
    #[command(flatten)]
    vo_noise: VoNoiseArgs,
    /// Seed for simulated VO.
    #[arg(long, env = "WORLDTRAJ_SEED", default_value_t = 0)]
    seed: u64,
    /// Align VO in chunks of this many frames.
    #[arg(long)]
    align_window: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// A run directory holding human.traj, camera.traj and joint files.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Bundle supplying ground truth.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    est_human: Option<PathBuf>,
    #[arg(long)]
    gt_human: Option<PathBuf>,
    #[arg(long)]
    est_camera: Option<PathBuf>,
    #[arg(long)]
    gt_camera: Option<PathBuf>,
    /// World-frame joints (.jsq).
    #[arg(long)]
    est_joints: Option<PathBuf>,
    #[arg(long)]
    gt_joints: Option<PathBuf>,
    /// Camera-frame joints (.jsq).
    #[arg(long)]
    est_joints_camera: Option<PathBuf>,
    #[arg(long)]
    gt_joints_camera: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEGMENT_LENGTH)]
    segment_length: usize,
    #[arg(long, default_value = "sequence")]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, env = "WORLDTRAJ_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    min_frames: Option<usize>,
    #[arg(long)]
    max_frames: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, env = "WORLDTRAJ_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(required = true)]
    trajectories: Vec<PathBuf>,
    /// Column prefixes when exporting several trajectories; defaults to file stems.
    #[arg(long, value_delimiter = ',')]
    names: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Metric,
    Scaleless,
}

#[derive(Debug, Args)]
struct ImportArgs {
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    frame_rate: f64,
    #[arg(long, value_enum, default_value = "metric")]
    scale_status: ScaleArg,
}

/// Relative output paths land under `WORLDTRAJ_OUTPUT_ROOT` when it is set.
fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if p.is_relative() && !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn parse_degrees_range(s: &str) -> CliResult<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| config_err(format!("--phi-range expects START:END, got {s:?}")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|e| config_err(format!("--phi-range value {x:?}: {e}")))
    };
    Ok((parse(a)?.to_radians(), parse(b)?.to_radians()))
}

fn scene_config(args: &SimulateArgs, seed: u64) -> CliResult<SceneConfig> {
    let mut config = SceneConfig::new(args.motion, args.frames, args.shot.plan(), seed);
    if let Some(v) = args.speed {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(config_err(format!("--speed must be nonnegative, got {v}")));
        }
        config.motion = MotionParams { ..config.motion.with_speed(v) };
    }
    config.anchor = match args.anchor {
        AnchorArg::Pelvis => Anchor::Pelvis,
        AnchorArg::Neck => Anchor::Neck,
    };
    config.companions = args.companions;
    if args.phi_range.is_some() || args.dphi.is_some() {
        if args.shot != ShotArg::Arc {
            return Err(config_err("--phi-range and --dphi apply to --shot arc only"));
        }
        let (a, b) = match &args.phi_range {
            Some(r) => parse_degrees_range(r)?,
            None => (0.0, std::f64::consts::PI),
        };
        let step = args.dphi.unwrap_or(45.0);
        if !(step > 0.0) {
            return Err(config_err(format!("--dphi must be positive, got {step}")));
        }
        config.arc_sweep = Some((a, b, step.to_radians()));
    }
    Ok(config)
}

fn simulate_one(args: &SimulateArgs, seed: u64, dir: &Path) -> CliResult<String> {
    let config = scene_config(args, seed)?;
    let ehps = EhpsSettings {
        joint_noise_sigma: args.joint_noise,
        mode: match args.ehps {
            EhpsArg::Exact => EhpsMode::Exact,
            EhpsArg::Fitted => EhpsMode::Fitted,
        },
        seed: split_seed(seed, 1),
    };
    let vo = VoSettings {
        noise: args.vo.model()?,
        seed: split_seed(seed, 2),
    };
    let bundle = SceneBundle::simulate(&config, ehps, vo).map_err(config_err)?;
    let sums = write_bundle(dir, &bundle)?;
    let listing: String = sums.iter().map(|(name, sum)| format!("{sum}  {name}\n")).collect();
    std::fs::write(dir.join("checksums.sha256"), &listing).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let keyframes: usize = bundle
        .manifest
        .as_ref()
        .map_or(0, |m| m.segments.iter().map(|s| s.keyframes.len()).sum());
    Ok(format!(
        "{}: {} frames, {} keyframes\n{listing}",
        dir.display(),
        bundle.meta.frames,
        keyframes
    ))
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.count == 0 {
        return Err(config_err("--count must be at least 1"));
    }
    let out = output_path(&args.out);
    if args.count == 1 {
        print!("{}", simulate_one(args, args.seed, &out)?);
        return Ok(());
    }
    let jobs: Vec<(u64, PathBuf)> = (0..args.count)
        .map(|i| (args.seed + i as u64, out.join(format!("seq_{i:04}"))))
        .collect();
    let results = batch::run_parallel(&jobs, args.jobs, |(seed, dir)| simulate_one(args, *seed, dir));
    report_batch(results)
}

fn report_batch(results: Vec<CliResult<String>>) -> CliResult<()> {
    let total = results.len();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(s) => print!("{s}"),
            Err(e) => failed.push(e),
        }
    }
    if failed.len() > 1 || (total > 1 && !failed.is_empty()) {
        for e in &failed[1..] {
            eprintln!("error: {e}");
        }
        eprintln!("{} of {total} jobs failed", failed.len());
    }
    failed.into_iter().next().map_or(Ok(()), Err)
}

fn parse_intrinsics(choice: &str, base: &CameraIntrinsics) -> CliResult<CameraIntrinsics> {
    let parsed = match choice {
        "exact" => base.with_source(IntrinsicSource::Exact),
        "diagonal" | "diagonal-heuristic" => base.with_source(IntrinsicSource::DiagonalHeuristic),
        "dummy" => base.with_source(IntrinsicSource::Dummy),
        other => {
            let focal = other
                .strip_prefix("dummy:")
                .ok_or_else(|| config_err(format!("--intrinsics expects exact, diagonal or dummy[:F], got {other:?}")))?
                .parse::<f64>()
                .map_err(|e| config_err(format!("--intrinsics focal: {e}")))?;
            CameraIntrinsics {
                focal_px: focal,
                intrinsic_source: IntrinsicSource::Dummy,
                ..*base
            }
            .validated()
        }
    };
    parsed.map_err(config_err)
}

fn load_velocimeter(choice: &str, bundle: &SceneBundle) -> CliResult<Box<dyn VelocityEstimator>> {
    if choice == "oracle" {
        let r0 = bundle.gt_human.poses()[0].rotation.inverse();
        return Ok(Box::new(OracleVelocimeter::from_world_roots(&bundle.gt_human.positions(), &r0)));
    }
    Ok(Box::new(load_model_file(Path::new(choice))?))
}

fn load_model_file(path: &Path) -> CliResult<LearnedVelocimeter> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    load_model(&bytes, None).map_err(|e| match e {
        VelocimeterError::ArchitectureMismatch { .. } => config_err(format!("{}: {e}", path.display())),
        e => CliError::Io(format!("{}: {e}", path.display())),
    })
}

fn load_vo(args: &RunArgs, bundle: &SceneBundle) -> CliResult<Trajectory> {
    let simulated = args.vo == "simulate";
    if !simulated && !args.vo_noise.is_default() {
        return Err(config_err("VO noise flags need --vo simulate"));
    }
    match args.vo.as_str() {
        "bundle" => Ok(bundle.vo.clone()),
        "simulate" => worldtraj_core::sim::simulate_vo(&bundle.gt_camera, &args.vo_noise.model()?, split_seed(args.seed, 2))
            .map_err(config_err),
        path => Ok(read_trajectory(Path::new(path))?),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run_one(args: &RunArgs, bundle_dir: &Path, out: &Path) -> CliResult<String> {
    let bundle = read_bundle(bundle_dir)?;
    let intrinsics = parse_intrinsics(&args.intrinsics, &bundle.meta.intrinsics)?;
    let velocimeter = load_velocimeter(&args.velocimeter, &bundle)?;
    let vo = load_vo(args, &bundle)?;
    if args.align_window.is_some_and(|w| w < 3) {
        return Err(config_err("--align-window must be at least 3"));
    }
    let input = PipelineInput {
        observations: bundle.observations.clone(),
        intrinsics,
        vo,
        velocimeter: velocimeter.as_ref(),
    };
    let options = PipelineOptions {
        align_window: args.align_window,
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    match run_pipeline(&input, &options) {
        Ok(result) => {
            write_trajectory(&out.join("human.traj"), &result.human)?;
            write_trajectory(&out.join("camera.traj"), &result.camera)?;
            write_joint_sequence(&out.join("joints_world.jsq"), &result.joints_world)?;
            write_joint_sequence(&out.join("joints_camera.jsq"), &result.joints_camera)?;
            write_json(&out.join("diagnostics.json"), &result.diagnostics)?;
            let scale = result.diagnostics.alignment.as_ref().map_or(f64::NAN, |a| a.scale);
            let depth = result.diagnostics.root_depth.as_ref().map_or(f64::NAN, |d| d.mean);
            Ok(format!(
                "{}: alignment scale {scale:.6}, mean root depth {depth:.3} m -> {}\n",
                bundle_dir.display(),
                out.display()
            ))
        }
        Err(e) => {
            if let Some(mv) = &e.diagnostics.mv_human {
                write_trajectory(&out.join("human_mv_only.traj"), mv)?;
            }
            write_json(&out.join("diagnostics.json"), &e.diagnostics)?;
            for w in &e.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            Err(CliError::Pipeline(format!("{}: {e}", bundle_dir.display())))
        }
    }
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let single = args.bundles.len() == 1;
    let mut jobs = Vec::with_capacity(args.bundles.len());
    for b in &args.bundles {
        let out = match (&args.out, single) {
            (Some(o), true) => output_path(o),
            (Some(o), false) => {
                let name = b.file_name().ok_or_else(|| config_err(format!("bundle path {} has no name", b.display())))?;
                output_path(o).join(name)
            }
            (None, _) => b.join("run"),
        };
        jobs.push((b.clone(), out));
    }
    let mut outs: Vec<&PathBuf> = jobs.iter().map(|(_, o)| o).collect();
    outs.sort();
    outs.dedup();
    if outs.len() != jobs.len() {
        return Err(config_err("bundles must map to distinct output directories"));
    }
    let results = batch::run_parallel(&jobs, args.jobs, |(b, o)| run_one(args, b, o));
    report_batch(results)
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let pick = |explicit: &Option<PathBuf>, base: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
        explicit.clone().or_else(|| base.as_ref().map(|b| b.join(name)).filter(|p| p.exists()))
    };
    let bundle = args.bundle.as_deref().map(read_bundle).transpose()?;
    let est_human = pick(&args.est_human, &args.run, "human.traj").map(|p| read_trajectory(&p)).transpose()?;
    let est_camera = pick(&args.est_camera, &args.run, "camera.traj").map(|p| read_trajectory(&p)).transpose()?;
    let est_joints = pick(&args.est_joints, &args.run, "joints_world.jsq")
        .map(|p| read_joint_sequence(&p))
        .transpose()?;
    let est_joints_camera = pick(&args.est_joints_camera, &args.run, "joints_camera.jsq")
        .map(|p| read_joint_sequence(&p))
        .transpose()?;
    let load_traj = |p: &Option<PathBuf>| p.as_deref().map(read_trajectory).transpose();
    let load_jsq = |p: &Option<PathBuf>| p.as_deref().map(read_joint_sequence).transpose();
    let gt_human = load_traj(&args.gt_human)?.or_else(|| bundle.as_ref().map(|b| b.gt_human.clone()));
    let gt_camera = load_traj(&args.gt_camera)?.or_else(|| bundle.as_ref().map(|b| b.gt_camera.clone()));
    let gt_joints = load_jsq(&args.gt_joints)?.or_else(|| bundle.as_ref().map(|b| b.joints.clone()));
    let gt_joints_camera = load_jsq(&args.gt_joints_camera)?.or_else(|| bundle.as_ref().map(SceneBundle::joints_camera));

    let input = EvaluationInput {
        est_human: est_human.as_ref(),
        gt_human: gt_human.as_ref(),
        est_camera: est_camera.as_ref(),
        gt_camera: gt_camera.as_ref(),
        est_joints_world: est_joints.as_ref(),
        gt_joints_world: gt_joints.as_ref(),
        est_joints_camera: est_joints_camera.as_ref(),
        gt_joints_camera: gt_joints_camera.as_ref(),
    };
    let pairs = [
        (input.est_human.is_some(), input.gt_human.is_some()),
        (input.est_camera.is_some(), input.gt_camera.is_some()),
        (input.est_joints_world.is_some(), input.gt_joints_world.is_some()),
        (input.est_joints_camera.is_some(), input.gt_joints_camera.is_some()),
    ];
    if !pairs.iter().any(|(e, g)| *e && *g) {
        return Err(config_err("nothing to evaluate: give matching estimate and ground-truth inputs"));
    }
    let report = evaluate(&args.name, &input, args.segment_length).map_err(|e| match e {
        worldtraj_core::metrics::MetricsError::BadSegmentLength(_) => config_err(e),
        e => CliError::Pipeline(format!("evaluation failed: {e}")),
    })?;
    let out = output_path(&args.out);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(out.join("report.csv"), report.to_csv()).map_err(|e| CliError::Io(e.to_string()))?;
    let s = &report.sequence;
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "H-ATE {} mm  H-AS {}  C-ATE {} mm  C-AS {}  W-MPJPE {} mm  WA-MPJPE {} mm  MPJPE {} mm  PA-MPJPE {} mm  T-MPJPE {} mm  Accl {} m/s^2",
        show(s.h_ate_mm),
        show(s.h_as),
        show(s.c_ate_mm),
        show(s.c_as),
        show(s.w_mpjpe_100_mm),
        show(s.wa_mpjpe_100_mm),
        show(s.mpjpe_mm),
        show(s.pa_mpjpe_mm),
        show(s.t_mpjpe_mm),
        show(s.accel_m_s2),
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let (corpus_id, corpus) = read_corpus(&args.corpus)?;
    let d = TrainConfig::default();
    let config = TrainConfig {
        epochs: args.epochs.unwrap_or(d.epochs),
        hidden_width: args.hidden.unwrap_or(d.hidden_width),
        layers: args.layers.unwrap_or(d.layers),
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        window: args.window.unwrap_or(d.window),
        window_stride: args.stride.unwrap_or(d.window_stride),
        batch_size: args.batch.unwrap_or(d.batch_size),
        seed: args.seed.unwrap_or(d.seed),
        ..d
    };
    let report = train_velocimeter(&corpus, &config, &corpus_id).map_err(|e| match e {
        VelocimeterError::InvalidEntry { ref label, .. } if label == "train-config" => config_err(e),
        e => CliError::Pipeline(format!("training failed: {e}")),
    })?;
    let out = output_path(&args.out);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&out, save_model(&report.model)).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let default_corpus_id = CorpusConfig::default().corpus_id();
    let verdict = if corpus_id == default_corpus_id && config == TrainConfig::default() {
        if report.heldout_mae < BASELINE_HELDOUT_MAE {
            " (below baseline)"
        } else {
            " (ABOVE baseline)"
        }
    } else {
        ""
    };
    println!("epochs {} final loss {:.6}", report.epoch_losses.len(), report.epoch_losses.last().copied().unwrap_or(f64::NAN));
    println!(
        "held-out MAE {:.6} m/frame{verdict}; baseline threshold {BASELINE_HELDOUT_MAE}; mean speed {:.6} m/frame",
        report.heldout_mae, report.heldout_mean_speed
    );
    println!("training time {:.1} s", report.elapsed_secs);
    println!("checksum {}", report.model.parameter_checksum());
    println!("model {}", out.display());
    Ok(())
}

fn cmd_make_corpus(args: &CorpusArgs) -> CliResult<()> {
    let d = CorpusConfig::default();
    let config = CorpusConfig {
        sequences: args.sequences.unwrap_or(d.sequences),
        min_frames: args.min_frames.unwrap_or(d.min_frames),
        max_frames: args.max_frames.unwrap_or(d.max_frames),
        joint_noise_sigma: args.noise.unwrap_or(d.joint_noise_sigma),
        seed: args.seed.unwrap_or(d.seed),
        ..d
    };
    let corpus = default_corpus(&config).map_err(config_err)?;
    let out = output_path(&args.out);
    write_corpus(&out, &config.corpus_id(), &corpus)?;
    println!("{} sequences -> {} ({})", corpus.len(), out.display(), config.corpus_id());
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> CliResult<()> {
    if !args.names.is_empty() && args.names.len() != args.trajectories.len() {
        return Err(config_err("--names needs one name per trajectory"));
    }
    let trajs = args
        .trajectories
        .iter()
        .map(|p| read_trajectory(p))
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = if args.names.is_empty() {
        args.trajectories
            .iter()
            .map(|p| p.file_stem().map_or("traj".into(), |s| s.to_string_lossy().into_owned()))
            .collect()
    } else {
        args.names.clone()
    };
    let pairs: Vec<(&str, &Trajectory)> = names.iter().map(String::as_str).zip(&trajs).collect();
    let out = output_path(&args.out);
    std::fs::write(&out, trajectories_to_csv(&pairs)).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    println!("{} rows -> {}", trajs.iter().map(Trajectory::len).max().unwrap_or(0), out.display());
    Ok(())
}

fn cmd_import(args: &ImportArgs) -> CliResult<()> {
    if !(args.frame_rate > 0.0 && args.frame_rate.is_finite()) {
        return Err(config_err(format!("--frame-rate must be positive, got {}", args.frame_rate)));
    }
    let text = std::fs::read_to_string(&args.csv).map_err(|e| CliError::Io(format!("{}: {e}", args.csv.display())))?;
    let status = match args.scale_status {
        ScaleArg::Metric => ScaleStatus::Metric,
        ScaleArg::Scaleless => ScaleStatus::Scaleless,
    };
    let traj = trajectory_from_csv(&args.csv, &text, status, args.frame_rate)?;
    let out = output_path(&args.out);
    write_trajectory(&out, &traj)?;
    println!("{} poses -> {}", traj.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TrainMv(a) => cmd_train(a),
        Command::MakeCorpus(a) => cmd_make_corpus(a),
        Command::Export(a) => cmd_export(a),
        Command::ImportCsv(a) => cmd_import(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
