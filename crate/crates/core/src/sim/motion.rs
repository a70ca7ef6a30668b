//! Procedural 15-joint gait on a z-up ground plane.
//!
//! The body frame is x forward, y left, z up. Root orientation is a pure
//! yaw about world z following the path heading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, Rotation3, Vec3};
use crate::joints::{self, CoordinateFrame, JointSequence, Pose, NUM_JOINTS};
use crate::trajectory::{ScaleStatus, Trajectory};

use super::SimError;

pub const PELVIS_HEIGHT: f64 = 0.95;
pub const THIGH: f64 = 0.45;
pub const SHIN: f64 = 0.43;
pub const UPPER_ARM: f64 = 0.30;
pub const FOREARM: f64 = 0.27;
const LEG: f64 = THIGH + SHIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionKind {
    Idle,
    StraightWalk,
    CircleWalk,
    TurnWalk,
    Run,
}

impl MotionKind {
    pub const ALL: [MotionKind; 5] = [
        MotionKind::Idle,
        MotionKind::StraightWalk,
        MotionKind::CircleWalk,
        MotionKind::TurnWalk,
        MotionKind::Run,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MotionKind::Idle => "idle",
            MotionKind::StraightWalk => "straight-walk",
            MotionKind::CircleWalk => "circle-walk",
            MotionKind::TurnWalk => "turn-walk",
            MotionKind::Run => "run",
        }
    }
}

impl std::str::FromStr for MotionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MotionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown motion kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub kind: MotionKind,
    /// Path speed, m/s.
    pub speed: f64,
    /// Circle radius, m. Positive turns left.
    pub radius: f64,
    /// Total heading change of a turn walk, radians. Positive turns left.
    pub turn_angle: f64,
    pub turn_duration: f64,
    /// Initial heading about world z, radians.
    pub heading: f64,
    pub start: [f64; 2],
    /// Vertical pelvis bob amplitude, m.
    pub bob: f64,
    /// Lateral pelvis sway amplitude, m.
    pub sway: f64,
    pub frame_rate: f64,
}

impl MotionParams {
    pub fn new(kind: MotionKind) -> Self {
        let speed = match kind {
            MotionKind::Idle => 0.0,
            MotionKind::Run => 3.0,
            _ => 1.2,
        };
        Self {
            kind,
            speed,
            radius: 2.0,
            turn_angle: 150f64.to_radians(),
            turn_duration: 0.5,
            heading: 0.0,
            start: [0.0, 0.0],
            bob: 0.0,
            sway: 0.0,
            frame_rate: joints::DEFAULT_FRAME_RATE,
        }
        .with_speed(speed)
    }

    /// Sets the speed and rescales bob and sway to match it.
    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self.bob = 0.02 * (speed / 1.2).min(2.0);
        self.sway = 0.025 * (speed / 1.2).min(1.0);
        self
    }

    /// Straight path with no pelvis bob or sway.
    pub fn rigid_root(mut self) -> Self {
        self.bob = 0.0;
        self.sway = 0.0;
        self
    }

    /// Steps per second for the current speed.
    pub fn cadence(&self) -> f64 {
        1.5 + 0.3 * self.speed
    }

    /// Randomized parameters for corpus and scene generation.
    pub fn sample<R: Rng>(kind: MotionKind, rng: &mut R) -> Self {
        let mut p = Self::new(kind);
        let speed = match kind {
            MotionKind::Idle => 0.0,
            MotionKind::Run => rng.random_range(2.4..3.6),
            _ => rng.random_range(0.8..1.7),
        };
        p = p.with_speed(speed);
        p.heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        p.start = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        p.radius = sign * rng.random_range(2.0..5.0);
        p.turn_angle = sign * rng.random_range(60f64..170.0).to_radians();
        p.turn_duration = rng.random_range(0.5..1.2);
        p
    }
}

/// Root poses and joints of one generated character.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMotion {
    pub params: MotionParams,
    pub root: Trajectory,
    pub joints: JointSequence,
}

impl GeneratedMotion {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

struct PathSample {
    position: Vec3,
    heading: f64,
}

fn path(params: &MotionParams, k: usize) -> Vec<PathSample> {
    let dt = 1.0 / params.frame_rate;
    let start = Vec3::new(params.start[0], params.start[1], 0.0);
    let dir = |h: f64| Vec3::new(h.cos(), h.sin(), 0.0);
    match params.kind {
        MotionKind::Idle => (0..k)
            .map(|_| PathSample {
                position: start,
                heading: params.heading,
            })
            .collect(),
        MotionKind::StraightWalk | MotionKind::Run => (0..k)
            .map(|i| PathSample {
                position: start + dir(params.heading) * (params.speed * i as f64 * dt),
                heading: params.heading,
            })
            .collect(),
        MotionKind::CircleWalk => {
            let r = params.radius;
            let left = Vec3::new(-params.heading.sin(), params.heading.cos(), 0.0);
            let center = start + left * r;
            (0..k)
                .map(|i| {
                    let a = params.speed * i as f64 * dt / r;
                    let h = params.heading + a;
                    PathSample {
                        position: center - Vec3::new(-h.sin(), h.cos(), 0.0) * r,
                        heading: h,
                    }
                })
                .collect()
        }
        MotionKind::TurnWalk => {
            let duration = (k.saturating_sub(1)) as f64 * dt;
            let t0 = 0.5 * (duration - params.turn_duration);
            let heading_at =
                |t: f64| params.heading + params.turn_angle * smoothstep((t - t0) / params.turn_duration);
            let mut out = Vec::with_capacity(k);
            let mut p = start;
            const SUB: usize = 16;
            for i in 0..k {
                if i > 0 {
                    for s in 0..SUB {
                        let t = (i - 1) as f64 * dt + (s as f64 + 0.5) * dt / SUB as f64;
                        p += dir(heading_at(t)) * (params.speed * dt / SUB as f64);
                    }
                }
                out.push(PathSample {
                    position: p,
                    heading: heading_at(i as f64 * dt),
                });
            }
            out
        }
    }
}

/// Pitch `a` (forward positive) of a downward limb of length `len`.
fn limb(a: f64, len: f64) -> Vec3 {
    Vec3::new(a.sin() * len, 0.0, -a.cos() * len)
}

/// Root-relative body-frame pose at gait phase `phi`.
fn body_pose(params: &MotionParams, phi: f64, t: f64) -> Pose {
    let omega = std::f64::consts::PI * params.cadence();
    let amp = if params.speed > 0.0 {
        (params.speed / (LEG * omega)).min(0.6)
    } else {
        0.0
    };
    let knee_gain = if params.kind == MotionKind::Run { 0.9 } else { 0.35 };
    let breathe = if params.speed == 0.0 {
        0.05 * (2.0 * std::f64::consts::PI * 0.25 * t).sin()
    } else {
        0.0
    };

    let mut pose = [Vec3::zeros(); NUM_JOINTS];
    for (side, hip_j, knee_j, ankle_j, swing) in [
        (1.0, joints::LEFT_HIP, joints::LEFT_KNEE, joints::LEFT_ANKLE, phi.sin()),
        (-1.0, joints::RIGHT_HIP, joints::RIGHT_KNEE, joints::RIGHT_ANKLE, -phi.sin()),
    ] {
        let hip = Vec3::new(0.0, 0.1 * side, -0.05);
        let a = amp * swing;
        let phase = if side > 0.0 { phi } else { phi + std::f64::consts::PI };
        let flex = amp * knee_gain * 2.0 * (phase + 0.6).sin().max(0.0);
        let knee = hip + limb(a, THIGH);
        pose[hip_j] = hip;
        pose[knee_j] = knee;
        pose[ankle_j] = knee + limb(a - flex, SHIN);
    }
    for (side, sh_j, el_j, wr_j, swing) in [
        (1.0, joints::LEFT_SHOULDER, joints::LEFT_ELBOW, joints::LEFT_WRIST, -phi.sin()),
        (-1.0, joints::RIGHT_SHOULDER, joints::RIGHT_ELBOW, joints::RIGHT_WRIST, phi.sin()),
    ] {
        let shoulder = Vec3::new(0.0, 0.19 * side, 0.45);
        let a = 0.8 * amp * swing + breathe;
        let elbow = shoulder + limb(a, UPPER_ARM);
        pose[sh_j] = shoulder;
        pose[el_j] = elbow;
        pose[wr_j] = elbow + limb(a + 0.2 + 0.5 * amp, FOREARM);
    }
    pose[joints::NECK] = Vec3::new(0.0, 0.0, 0.5);
    pose[joints::HEAD_TOP] = Vec3::new(0.0, 0.0, 0.75);
    pose
}

/// Generates `k` frames of `params.kind` in a z-up world. The seed picks the
/// initial gait phase.
pub fn generate_motion(params: &MotionParams, k: usize, seed: u64) -> Result<GeneratedMotion, SimError> {
    if k < 2 {
        return Err(SimError::TooFewFrames(k));
    }
    if !(params.frame_rate > 0.0) || !(params.speed >= 0.0) {
        return Err(SimError::InvalidParameter("speed and frame rate must be nonnegative and positive".into()));
    }
    if params.kind == MotionKind::CircleWalk && params.radius == 0.0 {
        return Err(SimError::InvalidParameter("circle radius must be nonzero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase0 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let omega = std::f64::consts::PI * params.cadence();
    let dt = 1.0 / params.frame_rate;

    let samples = path(params, k);
    let mut roots = Vec::with_capacity(k);
    let mut frames = Vec::with_capacity(k);
    for (i, s) in samples.iter().enumerate() {
        let t = i as f64 * dt;
        let phi = if params.speed > 0.0 { phase0 + omega * t } else { phase0 };
        let yaw = Rotation3::about_z(s.heading);
        let offset = Vec3::new(0.0, params.sway * phi.sin(), PELVIS_HEIGHT + params.bob * (2.0 * phi).cos());
        let pelvis = s.position + yaw * offset;
        let root = RigidTransform::new(yaw, pelvis);
        let body = body_pose(params, phi, t);
        frames.push(body.map(|d| root.apply_to_point(&d)));
        roots.push(root);
    }
    Ok(GeneratedMotion {
        params: *params,
        root: Trajectory::new(roots, ScaleStatus::Metric, params.frame_rate)
            .map_err(|e| SimError::InvalidParameter(e.to_string()))?,
        joints: JointSequence::new(frames, params.frame_rate, CoordinateFrame::World)
            .map_err(|e| SimError::InvalidParameter(e.to_string()))?,
    })
}
