//! Ground-truthed synthetic scenes: procedural motion, a cinematic camera,
//! ideal EHPS observations and scaleless visual odometry.

pub mod motion;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{fit_weak_perspective, CameraIntrinsics, DepthError, WeakPerspectiveObservation};
use crate::geometry::{RigidTransform, Rotation3, Vec3};
use crate::joints::{CoordinateFrame, JointSequence, Pose, NUM_JOINTS};
use crate::shots::{
    self, compose_shots, interpolate_keyframes, Anchor, CharacterTrack, CompositionPolicy, ShotError,
    ShotKind, ShotManifest, ShotSpec, SphericalCameraState,
};
use crate::trajectory::{ScaleStatus, Trajectory};

pub use motion::{generate_motion, GeneratedMotion, MotionKind, MotionParams};

/// Closest a subject may come to the camera plane, meters.
pub const MIN_SUBJECT_DEPTH: f64 = 0.2;
/// Fraction of each image side kept free around the subject.
pub const VIEW_MARGIN: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("subject leaves the view at frame {frame}: {reason}")]
    SubjectOutOfView { frame: usize, reason: String },
    #[error("subject root at depth {depth:.3} m in frame {frame}, below the {MIN_SUBJECT_DEPTH} m floor")]
    SubjectBehindCamera { frame: usize, depth: f64 },
    #[error("camera trajectory does not start at identity (deviation {0:e})")]
    NotNormalized(f64),
    #[error(transparent)]
    Shot(#[from] ShotError),
    #[error(transparent)]
    Depth(#[from] DepthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CameraPlan {
    /// Automatic composition from the motion class.
    Composed,
    /// One shot of the given kind over the whole sequence.
    Single { kind: ShotKind },
    /// A camera that never moves.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub motion: MotionParams,
    pub frames: usize,
    pub camera: CameraPlan,
    pub intrinsics: CameraIntrinsics,
    pub anchor: Anchor,
    /// Characters walking alongside the subject. They steer the camera but
    /// never appear in observations.
    pub companions: usize,
    /// Arc sweep for single arc shots: start, end, step (radians).
    pub arc_sweep: Option<(f64, f64, f64)>,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(kind: MotionKind, frames: usize, camera: CameraPlan, seed: u64) -> Self {
        Self {
            motion: MotionParams::new(kind),
            frames,
            camera,
            intrinsics: default_intrinsics(),
            anchor: Anchor::Pelvis,
            companions: 0,
            arc_sweep: None,
            seed,
        }
    }
}

/// Independent child seed number `stream` of `seed`, so one configured seed
/// can drive scene, observation and VO noise without correlation.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

/// 1280×720 pinhole at f = 1000 px with a 256 px EHPS crop.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::exact(1000.0, 256, 1280, 720).expect("valid constants")
}

/// Every trajectory is expressed in the frame of camera 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub gt_human: Trajectory,
    pub gt_joints_world: JointSequence,
    pub gt_camera: Trajectory,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
    /// Maps camera-0 coordinates back into the z-up generation world.
    pub world_from_camera0: RigidTransform,
    pub config: SceneConfig,
    pub manifest: Option<ShotManifest>,
}

impl SyntheticScene {
    pub fn len(&self) -> usize {
        self.gt_camera.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt_camera.is_empty()
    }

    /// `T^c_h` for every frame.
    pub fn human_in_camera(&self) -> Vec<RigidTransform> {
        self.gt_camera
            .poses()
            .iter()
            .zip(self.gt_human.poses())
            .map(|(c, h)| c.inverse().compose(h))
            .collect()
    }

    pub fn joints_camera(&self, frame: usize) -> Pose {
        let inv = self.gt_camera.poses()[frame].inverse();
        self.gt_joints_world.frames()[frame].map(|p| inv.apply_to_point(&p))
    }

    /// Root displacement per frame rotated into the frame-0 body axes.
    pub fn canonical_velocities(&self) -> Vec<Vec3> {
        let r = self.gt_human.poses()[0].rotation.inverse();
        self.gt_human
            .positions()
            .windows(2)
            .map(|w| r * (w[1] - w[0]))
            .collect()
    }
}

fn camera_track(
    config: &SceneConfig,
    track: &CharacterTrack,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RigidTransform>, Option<ShotManifest>), SimError> {
    let k = config.frames;
    let fov = config.intrinsics.horizontal_fov();
    let aspect = config.intrinsics.aspect();
    let shot_seed: u64 = rng.random();
    match config.camera {
        CameraPlan::Composed => {
            let c = compose_shots(track, &CompositionPolicy::new(fov, aspect), shot_seed)?;
            Ok((c.poses, Some(c.manifest)))
        }
        CameraPlan::Static => {
            let mut spec = ShotSpec::new(ShotKind::Pan, fov, aspect);
            spec.frac = 0.45;
            let rel = SphericalCameraState::new(8.0, spec.theta_c, spec.phi_c)?;
            let cam = shots::spherical_to_world(track.state(0), &rel)?;
            Ok((vec![cam; k], None))
        }
        CameraPlan::Single { kind } => {
            let mut spec = ShotSpec::new(kind, fov, aspect);
            spec.seed = shot_seed;
            spec.phi_c = rng.random_range(30f64..60.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            spec.frac = 0.5;
            if let Some((a, b, step)) = config.arc_sweep {
                spec.sweep_range = (a, b);
                spec.sweep_step = step;
            }
            let mut keyframes = match kind {
                ShotKind::Arc => shots::generate_arc_shot(track, &spec, 0)?,
                ShotKind::Push => shots::generate_push_shot(track, &spec, 0)?,
                ShotKind::Pull => shots::generate_pull_shot(track, &spec, 0)?,
                ShotKind::Tracking => shots::generate_tracking_shot(track, &spec, 0..k)?,
                ShotKind::Pan => shots::generate_pan_shot(track, &spec, 0..k)?,
            };
            keyframes.retain(|kf| kf.frame_index < k);
            let pinned = matches!(kind, ShotKind::Tracking | ShotKind::Pan);
            if pinned && keyframes.last().map(|kf| kf.frame_index) != Some(k - 1) {
                let last = keyframes.last().expect("shots emit a first keyframe");
                let camera_pose = match kind {
                    ShotKind::Pan => shots::look_at(&last.camera_pose.translation, &track.state(k - 1).position)?,
                    _ => {
                        let rel = SphericalCameraState::relative_to(track.state(last.frame_index), &last.camera_pose.translation)?;
                        shots::spherical_to_world(track.state(k - 1), &rel)?
                    }
                };
                keyframes.push(shots::Keyframe { frame_index: k - 1, camera_pose });
            }
            let manifest = ShotManifest {
                classification: if track.root_extent() < CompositionPolicy::new(fov, aspect).lambda_bbox {
                    shots::MotionClass::Static
                } else {
                    shots::MotionClass::LongDistance
                },
                policy: CompositionPolicy {
                    overlap_rule: spec.overlap_rule,
                    lambda_overlap: spec.lambda_overlap,
                    keyframe_interval: spec.keyframe_interval,
                    ..CompositionPolicy::new(fov, aspect)
                },
                seed: shot_seed,
                segments: vec![shots::SegmentManifest {
                    kind,
                    start_frame: 0,
                    end_frame: k - 1,
                    keyframes: keyframes.iter().map(|kf| kf.frame_index).collect(),
                    r_c: (keyframes[0].camera_pose.translation - track.state(0).position).norm(),
                    theta_c: spec.theta_c,
                    phi_c: spec.phi_c,
                    sweep: (kind == ShotKind::Arc).then_some((spec.sweep_range.0, spec.sweep_range.1, spec.sweep_step)),
                    fracs: None,
                }],
            };
            Ok((interpolate_keyframes(&keyframes, k)?, Some(manifest)))
        }
    }
}

/// Checks that every joint projects inside the image minus the margin.
pub fn check_in_view(
    cameras: &[RigidTransform],
    joints_world: &JointSequence,
    intrinsics: &CameraIntrinsics,
) -> Result<(), SimError> {
    let w = f64::from(intrinsics.image_width);
    let h = f64::from(intrinsics.image_height);
    for (frame, (cam, pose)) in cameras.iter().zip(joints_world.frames()).enumerate() {
        let inv = cam.inverse();
        for (j, p) in pose.iter().enumerate() {
            let c = inv.apply_to_point(p);
            if c.z < MIN_SUBJECT_DEPTH {
                return Err(SimError::SubjectOutOfView {
                    frame,
                    reason: format!("joint {j} at depth {:.3} m", c.z),
                });
            }
            let px = intrinsics.project_pixel(&c).expect("positive depth");
            let inside = px[0] >= VIEW_MARGIN * w
                && px[0] <= (1.0 - VIEW_MARGIN) * w
                && px[1] >= VIEW_MARGIN * h
                && px[1] <= (1.0 - VIEW_MARGIN) * h;
            if !inside {
                return Err(SimError::SubjectOutOfView {
                    frame,
                    reason: format!("joint {j} projects to ({:.1}, {:.1}) px", px[0], px[1]),
                });
            }
        }
    }
    Ok(())
}

/// Builds a scene and re-expresses it in the frame of camera 0.
pub fn build_scene(config: &SceneConfig) -> Result<SyntheticScene, SimError> {
    let k = config.frames;
    if k < 2 {
        return Err(SimError::TooFewFrames(k));
    }
    config.intrinsics.validated()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let subject = generate_motion(&config.motion, k, rng.random())?;
    let mut tracks = vec![CharacterTrack::from_joints(subject.root.poses(), &subject.joints, config.anchor)?];
    for c in 0..config.companions {
        let mut p = config.motion;
        let side = if c % 2 == 0 { 1.0 } else { -1.0 };
        let offset = 0.8 * (c / 2 + 1) as f64 * side;
        p.start = [
            p.start[0] - offset * p.heading.sin(),
            p.start[1] + offset * p.heading.cos(),
        ];
        if p.kind == MotionKind::CircleWalk {
            p.radius -= offset;
        }
        let m = generate_motion(&p, k, rng.random())?;
        tracks.push(CharacterTrack::from_joints(m.root.poses(), &m.joints, config.anchor)?);
    }
    let track = CharacterTrack::merge(&tracks)?;
    let (cameras, manifest) = camera_track(config, &track, &mut rng)?;
    check_in_view(&cameras, &subject.joints, &config.intrinsics)?;

    let world_from_camera0 = cameras[0];
    let to_cam0 = world_from_camera0.inverse();
    let relabel = |t: Trajectory| t.transformed(&to_cam0);
    let mut relative: Vec<RigidTransform> = cameras.iter().map(|c| to_cam0.compose(c)).collect();
    relative[0] = RigidTransform::identity();
    let gt_camera = Trajectory::new(relative, ScaleStatus::Metric, config.motion.frame_rate)
        .map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    let gt_human = relabel(subject.root);
    let gt_joints_world = subject
        .joints
        .transformed(&vec![to_cam0; k], CoordinateFrame::World);
    Ok(SyntheticScene {
        gt_human,
        gt_joints_world,
        gt_camera,
        intrinsics: config.intrinsics,
        seed: config.seed,
        world_from_camera0,
        config: config.clone(),
        manifest,
    })
}

/// How the simulated EHPS head reports the weak-perspective camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EhpsMode {
    /// `s` from the true root depth, `(t_x, t_y)` from the true root.
    Exact,
    /// `(s, t_x, t_y)` fitted to the pinhole projection of the true joints.
    Fitted,
}

/// Observations an ideal EHPS model would emit, with isotropic Gaussian noise
/// of `joint_noise_sigma` meters on the root-relative joints.
pub fn simulate_ehps(
    scene: &SyntheticScene,
    joint_noise_sigma: f64,
    seed: u64,
    mode: EhpsMode,
) -> Result<Vec<WeakPerspectiveObservation>, SimError> {
    let noise = Normal::new(0.0, joint_noise_sigma)
        .map_err(|e| SimError::InvalidParameter(format!("joint noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = &scene.intrinsics;
    scene
        .human_in_camera()
        .iter()
        .enumerate()
        .map(|(frame, t_ch)| {
            let root = t_ch.translation;
            if root.z < MIN_SUBJECT_DEPTH {
                return Err(SimError::SubjectBehindCamera { frame, depth: root.z });
            }
            let joints = scene.joints_camera(frame);
            let truth: Pose = joints.map(|p| p - root);
            let mut noisy = truth;
            if joint_noise_sigma > 0.0 {
                for p in noisy.iter_mut() {
                    *p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                }
            }
            let (scale, t_x, t_y) = match mode {
                EhpsMode::Exact => (cam.ndc_focal() / root.z, root.x, root.y),
                EhpsMode::Fitted => {
                    let mut ndc = [[0.0; 2]; NUM_JOINTS];
                    for (n, p) in ndc.iter_mut().zip(&joints) {
                        *n = cam.project_ndc(p).ok_or(SimError::SubjectBehindCamera { frame, depth: p.z })?;
                    }
                    let fit = fit_weak_perspective(&noisy, &ndc)?;
                    (fit.scale, fit.t_x, fit.t_y)
                }
            };
            Ok(WeakPerspectiveObservation {
                scale,
                t_x,
                t_y,
                global_orientation: t_ch.rotation,
                joints_camera: noisy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VONoiseModel {
    /// Multiplies every translation; the corruption the pipeline must undo.
    pub scale_factor: f64,
    pub rotation_noise_sigma: f64,
    /// Metric translation noise, applied before scaling.
    pub translation_noise_sigma: f64,
    /// Metric drift along a fixed random direction, per frame.
    pub drift_per_frame: f64,
}

impl VONoiseModel {
    pub fn noiseless(scale_factor: f64) -> Self {
        Self {
            scale_factor,
            rotation_noise_sigma: 0.0,
            translation_noise_sigma: 0.0,
            drift_per_frame: 0.0,
        }
    }
}

/// Scaleless, perturbed copy of a camera trajectory that starts at identity.
pub fn simulate_vo(gt_camera: &Trajectory, noise: &VONoiseModel, seed: u64) -> Result<Trajectory, SimError> {
    if !(noise.scale_factor > 0.0 && noise.scale_factor.is_finite()) {
        return Err(SimError::InvalidParameter(format!(
            "scale factor must be positive, got {}",
            noise.scale_factor
        )));
    }
    let dev = gt_camera.poses()[0].deviation_from_identity();
    if dev > 1e-6 {
        return Err(SimError::NotNormalized(dev));
    }
    let t_noise = Normal::new(0.0, noise.translation_noise_sigma)
        .map_err(|e| SimError::InvalidParameter(format!("translation noise: {e}")))?;
    let r_noise = Normal::new(0.0, noise.rotation_noise_sigma)
        .map_err(|e| SimError::InvalidParameter(format!("rotation noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift_dir = {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 1e-9 { v.normalize() } else { Vec3::x() }
    };
    let sample3 = |d: &Normal<f64>, sigma: f64, rng: &mut ChaCha8Rng| {
        if sigma > 0.0 {
            Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))
        } else {
            Vec3::zeros()
        }
    };
    let perturbed: Vec<RigidTransform> = gt_camera
        .poses()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dt = sample3(&t_noise, noise.translation_noise_sigma, &mut rng)
                + drift_dir * (noise.drift_per_frame * i as f64);
            let dr = sample3(&r_noise, noise.rotation_noise_sigma, &mut rng);
            RigidTransform::new(
                p.rotation * Rotation3::from_axis_angle(&dr),
                (p.translation + dt) * noise.scale_factor,
            )
        })
        .collect();
    let first_inv = perturbed[0].inverse();
    let poses = if perturbed[0] == RigidTransform::identity() {
        perturbed
    } else {
        perturbed.iter().map(|p| first_inv.compose(p)).collect()
    };
    Trajectory::new(poses, ScaleStatus::Scaleless, gt_camera.frame_rate)
        .map_err(|e| SimError::InvalidParameter(e.to_string()))
}
