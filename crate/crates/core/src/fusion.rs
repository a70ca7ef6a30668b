//! Scale transfer from the motion-integrated human to the camera, and the
//! end-to-end pipeline.
//!
//! The human trajectory integrated from canonical velocities is metric. A
//! camera trajectory derived from it, `T^w_c = T^w_h · (T^c_h)⁻¹`, is metric
//! too but noisy; the scaleless VO trajectory is smooth but unscaled.
//! Similarity-aligning VO positions onto the derived positions transfers the
//! scale, and the human is then re-derived from the aligned camera.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{
    self, canonical_transform, canonicalize_joints, decanonicalize_velocity, integrate_velocities, CanonicalError,
};
use crate::depth::{root_translation_camera, CameraIntrinsics, DepthError, IntrinsicSource, WeakPerspectiveObservation};
use crate::geometry::{umeyama_align, GeometryError, RigidTransform, SimilarityTransform, Vec3};
use crate::joints::{CoordinateFrame, JointError, JointSequence};
use crate::trajectory::{ScaleStatus, Trajectory};
use crate::velocimeter::{estimate_velocities, VelocimeterError, VelocityEstimator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn check_len(expected: usize, got: usize) -> Result<(), FusionError> {
    if expected != got {
        return Err(FusionError::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `T^c_h = [θ^c_go | t^c_h]` with the root depth recovered from `s`.
pub fn human_root_transform_camera(
    obs: &WeakPerspectiveObservation,
    cam: &CameraIntrinsics,
) -> Result<RigidTransform, DepthError> {
    Ok(RigidTransform::new(obs.global_orientation, root_translation_camera(obs, cam)?))
}

/// `T^w_c = T^w_h · (T^c_h)⁻¹` per frame.
pub fn derive_camera_from_human(
    human: &Trajectory,
    human_in_camera: &[RigidTransform],
) -> Result<Trajectory, FusionError> {
    check_len(human.len(), human_in_camera.len())?;
    let poses = human
        .poses()
        .iter()
        .zip(human_in_camera)
        .map(|(h, ch)| h.compose(&ch.inverse()))
        .collect();
    Ok(Trajectory::new(poses, ScaleStatus::Metric, human.frame_rate).expect("nonempty"))
}

/// Similarity-aligns VO positions onto the derived camera positions. The
/// result keeps the VO rotations untouched.
pub fn align_camera_trajectory(
    vo: &Trajectory,
    derived: &Trajectory,
) -> Result<(Trajectory, SimilarityTransform), FusionError> {
    check_len(vo.len(), derived.len())?;
    let alignment = umeyama_align(&vo.positions(), &derived.positions(), true)?;
    Ok((apply_alignment(vo, &alignment), alignment))
}

fn apply_alignment(vo: &Trajectory, alignment: &SimilarityTransform) -> Trajectory {
    let poses = vo
        .poses()
        .iter()
        .map(|p| RigidTransform::new(p.rotation, alignment.apply(&p.translation)))
        .collect();
    Trajectory::new(poses, ScaleStatus::Metric, vo.frame_rate).expect("nonempty")
}

/// `T^w_h = T^w_c · T^c_h` per frame.
pub fn derive_human_from_camera(
    camera: &Trajectory,
    human_in_camera: &[RigidTransform],
) -> Result<Trajectory, FusionError> {
    check_len(camera.len(), human_in_camera.len())?;
    let poses = camera
        .poses()
        .iter()
        .zip(human_in_camera)
        .map(|(c, ch)| c.compose(ch))
        .collect();
    Ok(Trajectory::new(poses, ScaleStatus::Metric, camera.frame_rate).expect("nonempty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    DepthRecovery,
    WorldLifting,
    Canonicalization,
    VelocityEstimation,
    Decanonicalization,
    Integration,
    CameraDerivation,
    Alignment,
    HumanDerivation,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::DepthRecovery => "depth_recovery",
            Stage::WorldLifting => "world_lifting",
            Stage::Canonicalization => "canonicalization",
            Stage::VelocityEstimation => "velocity_estimation",
            Stage::Decanonicalization => "decanonicalization",
            Stage::Integration => "integration",
            Stage::CameraDerivation => "camera_derivation",
            Stage::Alignment => "alignment",
            Stage::HumanDerivation => "human_derivation",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Joints(#[from] JointError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Velocimeter(#[from] VelocimeterError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

impl StageError {
    /// True when the alignment could not anchor scale, e.g. a static camera.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            StageError::Fusion(FusionError::Geometry(GeometryError::DegenerateConfiguration(_)))
        )
    }
}

/// A failed stage plus whatever diagnostics were gathered before it, which
/// include the motion-only human trajectory once integration has run.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("pipeline stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub source: StageError,
    pub diagnostics: Box<Diagnostics>,
}

pub struct PipelineInput<'a> {
    pub observations: Vec<WeakPerspectiveObservation>,
    pub intrinsics: CameraIntrinsics,
    /// Scaleless VO whose first pose is the identity.
    pub vo: Trajectory,
    pub velocimeter: &'a dyn VelocityEstimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Align in consecutive chunks of this many frames instead of once.
    pub align_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub scale: f64,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    /// RMS distance between aligned VO and derived camera positions, m.
    pub residual_rms: f64,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub focal_px: f64,
    pub intrinsic_source: IntrinsicSource,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames: usize,
    pub velocimeter: String,
    /// Whole-sequence alignment, or the first chunk when windowed.
    pub alignment: Option<AlignmentReport>,
    pub window_alignments: Vec<AlignmentReport>,
    pub root_depth: Option<DepthSummary>,
    pub stage_timings: Vec<StageTiming>,
    pub warnings: Vec<String>,
    /// Set when alignment failed and only the motion-integrated human exists.
    pub mv_only_fallback: bool,
    #[serde(skip)]
    pub mv_human: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub human: Trajectory,
    pub camera: Trajectory,
    /// Recovered joints in the camera frame, root placed at the recovered depth.
    pub joints_camera: JointSequence,
    /// `joints_camera` carried into the world by the aligned camera.
    pub joints_world: JointSequence,
    pub diagnostics: Diagnostics,
}

struct Run {
    diagnostics: Diagnostics,
}

impl Run {
    fn stage<T, E: Into<StageError>>(
        &mut self,
        stage: Stage,
        f: impl FnOnce() -> Result<T, E>,
    ) -> Result<T, PipelineError> {
        let t = Instant::now();
        let out = f();
        self.diagnostics.stage_timings.push(StageTiming {
            stage,
            seconds: t.elapsed().as_secs_f64(),
        });
        out.map_err(|e| self.fail(stage, e.into()))
    }

    fn fail(&mut self, stage: Stage, source: StageError) -> PipelineError {
        if source.is_degenerate() {
            self.diagnostics.mv_only_fallback = self.diagnostics.mv_human.is_some();
            self.diagnostics
                .warnings
                .push(format!("{stage}: {source}; reporting the motion-only human trajectory"));
        }
        PipelineError {
            stage,
            source,
            diagnostics: Box::new(self.diagnostics.clone()),
        }
    }
}

fn report(alignment: &SimilarityTransform, vo: &[Vec3], derived: &[Vec3], start: usize) -> AlignmentReport {
    let n = vo.len().max(1) as f64;
    let rotation = alignment.rotation.to_axis_angle();
    AlignmentReport {
        scale: alignment.scale,
        rotation: [rotation.x, rotation.y, rotation.z],
        translation: [alignment.translation.x, alignment.translation.y, alignment.translation.z],
        residual_rms: (alignment.sum_squared_residual(vo, derived) / n).sqrt(),
        start_frame: start,
        end_frame: start + vo.len() - 1,
    }
}

/// Chunk boundaries of at least 3 frames each; a short tail joins the last chunk.
fn chunks(k: usize, window: usize) -> Vec<std::ops::Range<usize>> {
    let w = window.max(3);
    let mut out: Vec<std::ops::Range<usize>> = Vec::new();
    let mut a = 0;
    while a < k {
        let b = (a + w).min(k);
        if b - a < 3 {
            if let Some(last) = out.last_mut() {
                last.end = k;
                break;
            }
        }
        out.push(a..b);
        a = b;
    }
    out
}

/// Runs the full chain from observations and VO to metric human and camera
/// trajectories in the frame of VO camera 0.
pub fn run_pipeline(input: &PipelineInput, options: &PipelineOptions) -> Result<PipelineOutput, PipelineError> {
    let k = input.observations.len();
    let mut run = Run {
        diagnostics: Diagnostics {
            frames: k,
            velocimeter: input.velocimeter.name().to_string(),
            ..Diagnostics::default()
        },
    };
    run.stage(Stage::Input, || {
        if k < 3 {
            return Err(StageError::Input(format!("need at least 3 frames, got {k}")));
        }
        if input.vo.len() != k {
            return Err(StageError::Input(format!("{k} observations but {} VO poses", input.vo.len())));
        }
        Ok(())
    })?;
    if input.vo.scale_status != ScaleStatus::Scaleless {
        run.diagnostics
            .warnings
            .push("VO trajectory is tagged metric; its scale is re-estimated anyway".into());
    }
    let frame_rate = input.vo.frame_rate;

    let human_in_camera = run.stage(Stage::DepthRecovery, || {
        input
            .observations
            .iter()
            .map(|o| human_root_transform_camera(o, &input.intrinsics))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let depths: Vec<f64> = human_in_camera.iter().map(|t| t.translation.z).collect();
    run.diagnostics.root_depth = Some(DepthSummary {
        mean: depths.iter().sum::<f64>() / k as f64,
        min: depths.iter().copied().fold(f64::INFINITY, f64::min),
        max: depths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        focal_px: input.intrinsics.focal_px,
        intrinsic_source: input.intrinsics.intrinsic_source,
    });

    let (joints_camera, joints_world) = run.stage(Stage::WorldLifting, || -> Result<_, StageError> {
        let frames = input
            .observations
            .iter()
            .zip(&human_in_camera)
            .map(|(o, t)| o.joints_at(&t.translation))
            .collect();
        let camera = JointSequence::new(frames, frame_rate, CoordinateFrame::Camera)?;
        let world = canonical::joints_to_world(&camera, &input.vo)?;
        Ok((camera, world))
    })?;

    let orientation0 = input.vo.poses()[0].rotation * human_in_camera[0].rotation;
    let (tf, joints_canonical) = run.stage(Stage::Canonicalization, || -> Result<_, CanonicalError> {
        let tf = canonical_transform(&joints_world, &orientation0)?;
        let c = canonicalize_joints(&joints_world, &tf)?;
        Ok((tf, c))
    })?;

    let v_canonical = run.stage(Stage::VelocityEstimation, || {
        estimate_velocities(input.velocimeter, &joints_canonical)
    })?;
    let v_world = run.stage(Stage::Decanonicalization, || decanonicalize_velocity(&v_canonical, &tf))?;

    let mv_human = run.stage(Stage::Integration, || -> Result<Trajectory, StageError> {
        let initial = input.vo.poses()[0].apply_to_point(&human_in_camera[0].translation);
        let roots = integrate_velocities(&v_world, initial);
        if roots.len() != k {
            return Err(StageError::Input(format!("velocimeter returned {} velocities for {k} frames", roots.len() - 1)));
        }
        let poses = roots
            .iter()
            .zip(input.vo.poses())
            .zip(&human_in_camera)
            .map(|((p, vo), ch)| RigidTransform::new(vo.rotation * ch.rotation, *p))
            .collect();
        Ok(Trajectory::new(poses, ScaleStatus::Metric, frame_rate).expect("nonempty"))
    })?;
    run.diagnostics.mv_human = Some(mv_human.clone());

    let derived = run.stage(Stage::CameraDerivation, || derive_camera_from_human(&mv_human, &human_in_camera))?;

    let mut reports = Vec::new();
    let camera = run.stage(Stage::Alignment, || -> Result<Trajectory, FusionError> {
        let vo_p = input.vo.positions();
        let de_p = derived.positions();
        let ranges = match options.align_window {
            None => vec![0..k],
            Some(w) => chunks(k, w),
        };
        let mut poses = Vec::with_capacity(k);
        for r in ranges {
            let a = umeyama_align(&vo_p[r.clone()], &de_p[r.clone()], true)?;
            reports.push(report(&a, &vo_p[r.clone()], &de_p[r.clone()], r.start));
            poses.extend(
                input.vo.poses()[r]
                    .iter()
                    .map(|p| RigidTransform::new(p.rotation, a.apply(&p.translation))),
            );
        }
        Ok(Trajectory::new(poses, ScaleStatus::Metric, frame_rate).expect("nonempty"))
    })?;
    run.diagnostics.alignment = reports.first().cloned();
    if options.align_window.is_some() {
        run.diagnostics.window_alignments = reports;
    }

    let human = run.stage(Stage::HumanDerivation, || derive_human_from_camera(&camera, &human_in_camera))?;
    let joints_world = joints_camera.transformed(camera.poses(), CoordinateFrame::World);
    Ok(PipelineOutput {
        human,
        camera,
        joints_camera,
        joints_world,
        diagnostics: run.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation3;
    use crate::shots::ShotKind;
    use crate::sim::{build_scene, simulate_ehps, simulate_vo, CameraPlan, EhpsMode, SceneConfig, VONoiseModel};
    use crate::sim::motion::MotionKind;
    use crate::velocimeter::OracleVelocimeter;

    fn max_position_error(a: &Trajectory, b: &Trajectory) -> f64 {
        a.positions()
            .iter()
            .zip(b.positions())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    }

    fn run(kind: MotionKind, plan: CameraPlan, scale: f64, options: PipelineOptions) -> (PipelineOutput, crate::sim::SyntheticScene) {
        let scene = build_scene(&SceneConfig::new(kind, 90, plan, 5)).unwrap();
        let obs = simulate_ehps(&scene, 0.0, 1, EhpsMode::Exact).unwrap();
        let vo = simulate_vo(&scene.gt_camera, &VONoiseModel::noiseless(1.0 / scale), 2).unwrap();
        let oracle = OracleVelocimeter::from_canonical(scene.canonical_velocities());
        let input = PipelineInput {
            observations: obs,
            intrinsics: scene.intrinsics,
            vo,
            velocimeter: &oracle,
        };
        (run_pipeline(&input, &options).unwrap(), scene)
    }

    #[test]
    fn derive_round_trip() {
        let human = Trajectory::new(
            (0..5)
                .map(|i| RigidTransform::new(Rotation3::about_z(0.1 * i as f64), Vec3::new(i as f64, 0.5, 2.0)))
                .collect(),
            ScaleStatus::Metric,
            30.0,
        )
        .unwrap();
        let ch: Vec<_> = (0..5)
            .map(|i| RigidTransform::new(Rotation3::about_y(0.2), Vec3::new(0.1, 0.0, 3.0 + i as f64)))
            .collect();
        let cam = derive_camera_from_human(&human, &ch).unwrap();
        let back = derive_human_from_camera(&cam, &ch).unwrap();
        assert!(max_position_error(&human, &back) < 1e-12);
        assert!(matches!(
            derive_camera_from_human(&human, &ch[..4]),
            Err(FusionError::LengthMismatch { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn oracle_pipeline_recovers_metric_trajectories() {
        let (out, scene) = run(MotionKind::StraightWalk, CameraPlan::Single { kind: ShotKind::Tracking }, 3.0, PipelineOptions::default());
        assert!(max_position_error(&out.human, &scene.gt_human) < 1e-6);
        assert!(max_position_error(&out.camera, &scene.gt_camera) < 1e-6);
        let a = out.diagnostics.alignment.as_ref().unwrap();
        assert!((a.scale - 3.0).abs() < 1e-6, "scale {}", a.scale);
        assert_eq!(out.human.scale_status, ScaleStatus::Metric);
        assert_eq!(out.diagnostics.stage_timings.len(), 10);
    }

    #[test]
    fn camera_rotations_are_vo_rotations() {
        let scene = build_scene(&SceneConfig::new(MotionKind::CircleWalk, 60, CameraPlan::Composed, 9)).unwrap();
        let vo = simulate_vo(&scene.gt_camera, &VONoiseModel::noiseless(0.5), 0).unwrap();
        let derived = scene.gt_camera.clone();
        let (aligned, _) = align_camera_trajectory(&vo, &derived).unwrap();
        for (a, v) in aligned.poses().iter().zip(vo.poses()) {
            assert_eq!(a.rotation, v.rotation);
        }
    }

    #[test]
    fn static_camera_falls_back_to_motion_only() {
        let scene = build_scene(&SceneConfig::new(MotionKind::StraightWalk, 60, CameraPlan::Static, 3)).unwrap();
        let obs = simulate_ehps(&scene, 0.0, 1, EhpsMode::Exact).unwrap();
        let vo = simulate_vo(&scene.gt_camera, &VONoiseModel::noiseless(1.0), 2).unwrap();
        let oracle = OracleVelocimeter::from_canonical(scene.canonical_velocities());
        let input = PipelineInput { observations: obs, intrinsics: scene.intrinsics, vo, velocimeter: &oracle };
        let err = run_pipeline(&input, &PipelineOptions::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Alignment);
        assert!(err.source.is_degenerate());
        assert!(err.diagnostics.mv_only_fallback);
        let mv = err.diagnostics.mv_human.as_ref().unwrap();
        assert!(max_position_error(mv, &scene.gt_human) < 1e-9);
    }

    #[test]
    fn too_few_frames_is_an_input_error() {
        let scene = build_scene(&SceneConfig::new(MotionKind::StraightWalk, 30, CameraPlan::Composed, 3)).unwrap();
        let obs = simulate_ehps(&scene, 0.0, 1, EhpsMode::Exact).unwrap();
        let vo = Trajectory::new(scene.gt_camera.poses()[..2].to_vec(), ScaleStatus::Scaleless, 30.0).unwrap();
        let oracle = OracleVelocimeter::from_canonical(vec![Vec3::zeros()]);
        let input = PipelineInput {
            observations: obs[..2].to_vec(),
            intrinsics: scene.intrinsics,
            vo,
            velocimeter: &oracle,
        };
        let err = run_pipeline(&input, &PipelineOptions::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Input);
        assert!(err.to_string().contains("input"));
    }

    #[test]
    fn windowed_alignment_reports_each_chunk() {
        assert_eq!(chunks(10, 4), vec![0..4, 4..10]);
        assert_eq!(chunks(11, 4), vec![0..4, 4..8, 8..11]);
        assert_eq!(chunks(9, 4), vec![0..4, 4..9]);
        let (out, scene) = run(
            MotionKind::StraightWalk,
            CameraPlan::Single { kind: ShotKind::Tracking },
            2.0,
            PipelineOptions { align_window: Some(30) },
        );
        assert_eq!(out.diagnostics.window_alignments.len(), 3);
        assert!(max_position_error(&out.human, &scene.gt_human) < 1e-6);
    }

    #[test]
    fn scale_equivariant_in_vo_scale() {
        let (a, _) = run(MotionKind::TurnWalk, CameraPlan::Composed, 1.0, PipelineOptions::default());
        let (b, _) = run(MotionKind::TurnWalk, CameraPlan::Composed, 7.0, PipelineOptions::default());
        assert!(max_position_error(&a.human, &b.human) < 1e-6);
        assert!(max_position_error(&a.camera, &b.camera) < 1e-6);
    }
}
