//! Cinematic camera paths in a human-centric spherical frame.
//!
//! The world is z-up. A camera at polar angle `θ` and azimuth `φ` around a
//! character sits at `p + r·(sinθ cosφ, sinθ sinφ, cosθ)` and looks at `p`.
//! The camera axes follow the pinhole convention used by the simulator:
//! x right, y down, z forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Rotation3, Vec3};
use crate::joints::{self, JointSequence};

const TAU: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShotError {
    #[error("view fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("field of view must lie in (0, π), got {0}")]
    InvalidFov(f64),
    #[error("invalid shot parameter: {0}")]
    InvalidParameter(String),
    #[error("sweep range is empty")]
    EmptyRange,
    #[error("camera coincides with its look-at target")]
    DegenerateLookAt,
    #[error("character track is empty")]
    EmptyTrack,
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCameraState {
    pub r_c: f64,
    pub theta_c: f64,
    pub phi_c: f64,
}

impl SphericalCameraState {
    pub fn new(r_c: f64, theta_c: f64, phi_c: f64) -> Result<Self, ShotError> {
        if !(r_c > 0.0 && r_c.is_finite()) {
            return Err(ShotError::InvalidParameter(format!("radius must be positive, got {r_c}")));
        }
        Ok(Self {
            r_c,
            theta_c: wrap(theta_c),
            phi_c: wrap(phi_c),
        })
    }

    /// Relative state of a camera at `eye` around `ch`.
    pub fn relative_to(ch: &CharacterState, eye: &Vec3) -> Result<Self, ShotError> {
        let d = eye - ch.position;
        let r = d.norm();
        if r == 0.0 {
            return Err(ShotError::DegenerateLookAt);
        }
        let theta = (d.z / r).clamp(-1.0, 1.0).acos();
        let phi = d.y.atan2(d.x);
        Self::new(r, theta - ch.theta_ch, phi - ch.phi_ch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Medium shot.
    Neck,
    /// Full shot.
    Pelvis,
}

impl Anchor {
    fn joint(&self) -> usize {
        match self {
            Anchor::Neck => joints::NECK,
            Anchor::Pelvis => joints::PELVIS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterState {
    pub position: Vec3,
    /// Polar angle of the facing direction.
    pub theta_ch: f64,
    /// Azimuth of the facing direction.
    pub phi_ch: f64,
    pub anchor: Anchor,
}

impl CharacterState {
    pub fn from_facing(position: Vec3, facing: &Vec3, anchor: Anchor) -> Self {
        let f = facing.normalize();
        Self {
            position,
            theta_ch: f.z.clamp(-1.0, 1.0).acos(),
            phi_ch: f.y.atan2(f.x),
            anchor,
        }
    }

    pub fn facing(&self) -> Vec3 {
        let (st, ct) = self.theta_ch.sin_cos();
        let (sp, cp) = self.phi_ch.sin_cos();
        Vec3::new(st * cp, st * sp, ct)
    }

    /// Mean position and mean facing direction of several characters.
    pub fn average(states: &[CharacterState]) -> Option<Self> {
        let first = states.first()?;
        let n = states.len() as f64;
        let position = states.iter().map(|s| s.position).sum::<Vec3>() / n;
        let facing = states.iter().map(|s| s.facing()).sum::<Vec3>();
        let facing = if facing.norm() > 1e-12 { facing } else { first.facing() };
        Some(Self::from_facing(position, &facing, first.anchor))
    }
}

/// Per-frame character states plus every joint used for bounding boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterTrack {
    states: Vec<CharacterState>,
    roots: Vec<Vec3>,
    points: Vec<Vec<Vec3>>,
}

impl CharacterTrack {
    /// One character from world root poses (body x forward) and joints.
    pub fn from_joints(
        roots: &[RigidTransform],
        joints: &JointSequence,
        anchor: Anchor,
    ) -> Result<Self, ShotError> {
        if roots.is_empty() || roots.len() != joints.len() {
            return Err(ShotError::EmptyTrack);
        }
        let states = roots
            .iter()
            .zip(joints.frames())
            .map(|(r, pose)| {
                let facing = r.rotation.matrix().column(0).into_owned();
                CharacterState::from_facing(pose[anchor.joint()], &facing, anchor)
            })
            .collect();
        Ok(Self {
            states,
            roots: joints.pelvis_track(),
            points: joints.frames().iter().map(|p| p.to_vec()).collect(),
        })
    }

    /// Averages states frame by frame; bounding boxes cover all characters.
    pub fn merge(tracks: &[CharacterTrack]) -> Result<Self, ShotError> {
        let first = tracks.first().ok_or(ShotError::EmptyTrack)?;
        let k = first.len();
        if tracks.iter().any(|t| t.len() != k) {
            return Err(ShotError::InvalidParameter("tracks differ in length".into()));
        }
        let mut out = Self {
            states: Vec::with_capacity(k),
            roots: Vec::with_capacity(k),
            points: Vec::with_capacity(k),
        };
        for i in 0..k {
            let states: Vec<_> = tracks.iter().map(|t| t.states[i]).collect();
            out.states.push(CharacterState::average(&states).expect("nonempty"));
            out.roots.push(tracks.iter().map(|t| t.roots[i]).sum::<Vec3>() / tracks.len() as f64);
            out.points.push(tracks.iter().flat_map(|t| t.points[i].iter().copied()).collect());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, frame: usize) -> &CharacterState {
        &self.states[frame.min(self.states.len() - 1)]
    }

    pub fn points(&self, frame: usize) -> &[Vec3] {
        &self.points[frame.min(self.points.len() - 1)]
    }

    /// Longest edge of the axis-aligned box around all root positions.
    pub fn root_extent(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for r in &self.roots {
            lo = lo.inf(r);
            hi = hi.sup(r);
        }
        (hi - lo).max()
    }
}

/// Camera-to-world pose at `eye` looking at `target`, world z up. Falls back
/// to +x as the up hint when the view is vertical.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Result<RigidTransform, ShotError> {
    let d = target - eye;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(ShotError::DegenerateLookAt);
    }
    let fwd = d / n;
    let mut right = fwd.cross(&Vec3::z());
    if right.norm() < 1e-9 {
        right = fwd.cross(&Vec3::x());
    }
    let right = right.normalize();
    let down = fwd.cross(&right);
    let m = nalgebra::Matrix3::from_columns(&[right, down, fwd]);
    Ok(RigidTransform::new(Rotation3::from_matrix_unchecked(m), *eye))
}

pub fn spherical_to_world(
    ch: &CharacterState,
    cam: &SphericalCameraState,
) -> Result<RigidTransform, ShotError> {
    if !(cam.r_c > 0.0) {
        return Err(ShotError::InvalidParameter(format!("radius must be positive, got {}", cam.r_c)));
    }
    let theta = wrap(cam.theta_c + ch.theta_ch);
    let phi = wrap(cam.phi_c + ch.phi_ch);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let eye = ch.position + Vec3::new(st * cp, st * sp, ct) * cam.r_c;
    look_at(&eye, &ch.position)
}

/// Half-extent of the shorter image side in tangent units, for a horizontal
/// field of view `fov` and width/height `aspect`.
pub fn half_view_extent(fov: f64, aspect: f64) -> f64 {
    let t = (fov / 2.0).tan();
    if aspect > 1.0 {
        t / aspect
    } else {
        t
    }
}

/// Radius putting a character of camera-space height `h_bbox` at view
/// fraction `frac` of the half shorter image side.
pub fn radius_for_fraction(h_bbox: f64, frac: f64, fov: f64, aspect: f64) -> Result<f64, ShotError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(ShotError::InvalidFraction(frac));
    }
    if !(fov > 0.0 && fov < std::f64::consts::PI) {
        return Err(ShotError::InvalidFov(fov));
    }
    if !(h_bbox > 0.0 && aspect > 0.0) {
        return Err(ShotError::InvalidParameter(format!(
            "bbox height and aspect must be positive, got {h_bbox} and {aspect}"
        )));
    }
    let r = h_bbox / (frac * (fov / 2.0).tan());
    Ok(if aspect > 1.0 { r * aspect } else { r })
}

/// Axis-aligned box `[u0, v0, u1, v1]` of points projected through a
/// camera-to-world pose, in tangent units. `None` if any point is behind.
pub fn projected_bbox(camera: &RigidTransform, points: &[Vec3]) -> Option<[f64; 4]> {
    let inv = camera.inverse();
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        let c = inv.apply_to_point(p);
        if c.z <= 1e-9 {
            return None;
        }
        let (u, v) = (c.x / c.z, c.y / c.z);
        b[0] = b[0].min(u);
        b[1] = b[1].min(v);
        b[2] = b[2].max(u);
        b[3] = b[3].max(v);
    }
    Some(b)
}

pub fn bbox_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    if a == b {
        return 1.0;
    }
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &[f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Projected bbox height over the half shorter image side.
pub fn view_fraction(camera: &RigidTransform, points: &[Vec3], fov: f64, aspect: f64) -> Option<f64> {
    let b = projected_bbox(camera, points)?;
    Some((b[3] - b[1]) / half_view_extent(fov, aspect))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotKind {
    Arc,
    Push,
    Pull,
    Tracking,
    Pan,
}

impl std::str::FromStr for ShotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arc" => Ok(ShotKind::Arc),
            "push" => Ok(ShotKind::Push),
            "pull" => Ok(ShotKind::Pull),
            "tracking" => Ok(ShotKind::Tracking),
            "pan" => Ok(ShotKind::Pan),
            _ => Err(format!("unknown shot kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Azimuth,
    Polar,
}

/// When tracking and pan shots emit a new keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapRule {
    /// Emit once the overlap with the last keyframe drops below the threshold.
    BelowThreshold,
    /// Emit while the overlap exceeds the threshold.
    AboveThreshold,
}

impl OverlapRule {
    fn fires(&self, iou: f64, lambda: f64) -> bool {
        match self {
            OverlapRule::BelowThreshold => iou < lambda,
            OverlapRule::AboveThreshold => iou > lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSpec {
    pub kind: ShotKind,
    /// Polar offset from the facing direction.
    pub theta_c: f64,
    /// Azimuth offset from the facing direction.
    pub phi_c: f64,
    /// View fraction for shots that hold a fixed framing.
    pub frac: f64,
    pub sweep_axis: SweepAxis,
    /// Arc sweep start and end, radians, relative offsets.
    pub sweep_range: (f64, f64),
    pub sweep_step: f64,
    pub frac_range: (f64, f64),
    pub frac_step: f64,
    /// Draw push/pull fractions uniformly from `frac_range` instead of stepping.
    pub random_frac: bool,
    pub lambda_overlap: f64,
    pub overlap_rule: OverlapRule,
    /// Horizontal field of view, radians.
    pub fov: f64,
    pub aspect: f64,
    pub keyframe_interval: usize,
    pub seed: u64,
}

impl ShotSpec {
    pub fn new(kind: ShotKind, fov: f64, aspect: f64) -> Self {
        Self {
            kind,
            theta_c: -10f64.to_radians(),
            phi_c: 45f64.to_radians(),
            frac: 0.6,
            sweep_axis: SweepAxis::Azimuth,
            sweep_range: (0.0, std::f64::consts::PI),
            sweep_step: std::f64::consts::FRAC_PI_4,
            frac_range: (0.3, 0.8),
            frac_step: 0.1,
            random_frac: false,
            lambda_overlap: 0.5,
            overlap_rule: OverlapRule::BelowThreshold,
            fov,
            aspect,
            keyframe_interval: 15,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ShotError> {
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(ShotError::InvalidFov(self.fov));
        }
        for f in [self.frac, self.frac_range.0, self.frac_range.1] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ShotError::InvalidFraction(f));
            }
        }
        if !(self.lambda_overlap > 0.0 && self.lambda_overlap < 1.0) {
            return Err(ShotError::InvalidParameter(format!(
                "overlap threshold must lie in (0, 1), got {}",
                self.lambda_overlap
            )));
        }
        if !(self.aspect > 0.0) || self.keyframe_interval == 0 {
            return Err(ShotError::InvalidParameter("aspect and keyframe interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub frame_index: usize,
    pub camera_pose: RigidTransform,
}

/// Radius at which the character at `frame` fills `frac` of the view through
/// the pinhole, refined from the plain camera-space height so that depth
/// spread of the joints is accounted for.
fn framed_radius(
    track: &CharacterTrack,
    frame: usize,
    theta_c: f64,
    phi_c: f64,
    frac: f64,
    spec: &ShotSpec,
) -> Result<f64, ShotError> {
    let ch = track.state(frame);
    let points = track.points(frame);
    let zs = points.iter().map(|p| p.z);
    let h0 = zs.clone().fold(f64::NEG_INFINITY, f64::max) - zs.fold(f64::INFINITY, f64::min);
    let mut r = radius_for_fraction(h0.max(0.1), frac, spec.fov, spec.aspect)?;
    for _ in 0..50 {
        let cam = spherical_to_world(ch, &SphericalCameraState::new(r, theta_c, phi_c)?)?;
        let Some(achieved) = view_fraction(&cam, points, spec.fov, spec.aspect) else {
            break;
        };
        let h_eff = achieved * half_view_extent(spec.fov, spec.aspect) * r;
        let next = radius_for_fraction(h_eff.max(1e-6), frac, spec.fov, spec.aspect)?;
        let done = (next - r).abs() <= 1e-13 * r;
        r = next;
        if done {
            break;
        }
    }
    Ok(r)
}

fn steps(start: f64, end: f64, step: f64) -> Result<Vec<f64>, ShotError> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() {
        return Err(ShotError::EmptyRange);
    }
    let span = end - start;
    let n = (span.abs() / step + 1e-9).floor() as usize;
    let sign = if span < 0.0 { -1.0 } else { 1.0 };
    Ok((0..=n).map(|j| start + sign * step * j as f64).collect())
}

/// Orbits the character at constant radius, one keyframe per interval.
pub fn generate_arc_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    start_frame: usize,
) -> Result<Vec<Keyframe>, ShotError> {
    spec.validate()?;
    if track.is_empty() {
        return Err(ShotError::EmptyTrack);
    }
    let (a, b) = spec.sweep_range;
    let angles = steps(a, b, spec.sweep_step)?;
    let placement = |x: f64| match spec.sweep_axis {
        SweepAxis::Azimuth => (spec.theta_c, x),
        SweepAxis::Polar => (x, spec.phi_c),
    };
    let (t0, p0) = placement(angles[0]);
    let r = framed_radius(track, start_frame, t0, p0, spec.frac, spec)?;
    angles
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let frame = start_frame + j * spec.keyframe_interval;
            let (t, p) = placement(x);
            Ok(Keyframe {
                frame_index: frame,
                camera_pose: spherical_to_world(track.state(frame), &SphericalCameraState::new(r, t, p)?)?,
            })
        })
        .collect()
}

fn frac_sequence(spec: &ShotSpec, increasing: bool) -> Result<Vec<f64>, ShotError> {
    let (lo, hi) = (spec.frac_range.0.min(spec.frac_range.1), spec.frac_range.0.max(spec.frac_range.1));
    let mut fracs = steps(lo, hi, spec.frac_step)?;
    if spec.random_frac {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for f in fracs.iter_mut() {
            *f = rng.random_range(lo..=hi);
        }
        fracs.sort_by(f64::total_cmp);
    }
    if !increasing {
        fracs.reverse();
    }
    Ok(fracs)
}

fn dolly_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    start_frame: usize,
    increasing: bool,
) -> Result<Vec<Keyframe>, ShotError> {
    spec.validate()?;
    if track.is_empty() {
        return Err(ShotError::EmptyTrack);
    }
    frac_sequence(spec, increasing)?
        .into_iter()
        .enumerate()
        .map(|(j, frac)| {
            let frame = start_frame + j * spec.keyframe_interval;
            let r = framed_radius(track, frame, spec.theta_c, spec.phi_c, frac, spec)?;
            Ok(Keyframe {
                frame_index: frame,
                camera_pose: spherical_to_world(
                    track.state(frame),
                    &SphericalCameraState::new(r, spec.theta_c, spec.phi_c)?,
                )?,
            })
        })
        .collect()
}

/// Moves toward the character through increasing view fractions.
pub fn generate_push_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    start_frame: usize,
) -> Result<Vec<Keyframe>, ShotError> {
    dolly_shot(track, spec, start_frame, true)
}

/// Moves away from the character through decreasing view fractions.
pub fn generate_pull_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    start_frame: usize,
) -> Result<Vec<Keyframe>, ShotError> {
    dolly_shot(track, spec, start_frame, false)
}

struct FollowState {
    frame: usize,
    camera: RigidTransform,
    bbox: Option<[f64; 4]>,
}

impl FollowState {
    fn new(track: &CharacterTrack, frame: usize, camera: RigidTransform) -> Self {
        Self {
            frame,
            camera,
            bbox: projected_bbox(&camera, track.points(frame)),
        }
    }

    /// Overlap between the character at `frame` seen through the keyframe
    /// camera and the keyframe's own box.
    fn overlap(&self, track: &CharacterTrack, frame: usize) -> f64 {
        match (self.bbox, projected_bbox(&self.camera, track.points(frame))) {
            (Some(a), Some(b)) => bbox_iou(&a, &b),
            _ => 0.0,
        }
    }
}

fn follow_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    frames: std::ops::Range<usize>,
    camera_at: impl Fn(usize) -> Result<RigidTransform, ShotError>,
) -> Result<Vec<Keyframe>, ShotError> {
    spec.validate()?;
    if track.is_empty() {
        return Err(ShotError::EmptyTrack);
    }
    let end = frames.end.min(track.len());
    let start = frames.start;
    if start >= end {
        return Err(ShotError::EmptyRange);
    }
    let first = camera_at(start)?;
    let mut keyframes = vec![Keyframe {
        frame_index: start,
        camera_pose: first,
    }];
    let mut last = FollowState::new(track, start, first);
    for f in start + 1..end {
        if spec.overlap_rule.fires(last.overlap(track, f), spec.lambda_overlap) {
            let cam = camera_at(f)?;
            keyframes.push(Keyframe {
                frame_index: f,
                camera_pose: cam,
            });
            last = FollowState::new(track, f, cam);
        }
    }
    debug_assert!(keyframes.windows(2).all(|w| w[0].frame_index < w[1].frame_index) && last.frame < end);
    Ok(keyframes)
}

/// Holds the relative spherical placement fixed while the character moves.
pub fn generate_tracking_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    frames: std::ops::Range<usize>,
) -> Result<Vec<Keyframe>, ShotError> {
    let start = frames.start.min(track.len().saturating_sub(1));
    let r = framed_radius(track, start, spec.theta_c, spec.phi_c, spec.frac, spec)?;
    let rel = SphericalCameraState::new(r, spec.theta_c, spec.phi_c)?;
    follow_shot(track, spec, frames, |f| spherical_to_world(track.state(f), &rel))
}

/// Keeps the camera where the shot starts and re-aims it at the character.
pub fn generate_pan_shot(
    track: &CharacterTrack,
    spec: &ShotSpec,
    frames: std::ops::Range<usize>,
) -> Result<Vec<Keyframe>, ShotError> {
    let start = frames.start.min(track.len().saturating_sub(1));
    let r = framed_radius(track, start, spec.theta_c, spec.phi_c, spec.frac, spec)?;
    let eye = spherical_to_world(track.state(start), &SphericalCameraState::new(r, spec.theta_c, spec.phi_c)?)?
        .translation;
    follow_shot(track, spec, frames, |f| look_at(&eye, &track.state(f).position))
}

/// Linear positions and slerped rotations, uniform in frame index. Frames
/// outside the keyframe span hold the nearest keyframe.
pub fn interpolate_keyframes(keyframes: &[Keyframe], total_frames: usize) -> Result<Vec<RigidTransform>, ShotError> {
    if keyframes.is_empty() {
        return Err(ShotError::InvalidParameter("no keyframes".into()));
    }
    if keyframes.windows(2).any(|w| w[0].frame_index >= w[1].frame_index) {
        return Err(ShotError::InvalidParameter("keyframe indices must increase strictly".into()));
    }
    let mut out = Vec::with_capacity(total_frames);
    let mut seg = 0;
    for f in 0..total_frames {
        while seg + 1 < keyframes.len() && keyframes[seg + 1].frame_index <= f {
            seg += 1;
        }
        let a = &keyframes[seg];
        if f <= a.frame_index || seg + 1 == keyframes.len() {
            out.push(a.camera_pose);
            continue;
        }
        let b = &keyframes[seg + 1];
        let t = (f - a.frame_index) as f64 / (b.frame_index - a.frame_index) as f64;
        let pa = &a.camera_pose;
        let pb = &b.camera_pose;
        out.push(RigidTransform::new(
            pa.rotation.slerp(&pb.rotation, t),
            pa.translation + (pb.translation - pa.translation) * t,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionPolicy {
    /// Root extent below which a motion counts as static or interactive, m.
    pub lambda_bbox: f64,
    /// Facing rotation since the last keyframe that switches tracking to pan.
    pub lambda_angle: f64,
    pub lambda_overlap: f64,
    pub overlap_rule: OverlapRule,
    pub fov: f64,
    pub aspect: f64,
    pub keyframe_interval: usize,
    /// Frames of steady facing before a pan hands back to tracking.
    pub settle_frames: usize,
}

impl CompositionPolicy {
    pub fn new(fov: f64, aspect: f64) -> Self {
        Self {
            lambda_bbox: 0.5,
            lambda_angle: 45f64.to_radians(),
            lambda_overlap: 0.5,
            overlap_rule: OverlapRule::BelowThreshold,
            fov,
            aspect,
            keyframe_interval: 15,
            settle_frames: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Static,
    LongDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentManifest {
    pub kind: ShotKind,
    pub start_frame: usize,
    pub end_frame: usize,
    pub keyframes: Vec<usize>,
    pub r_c: f64,
    pub theta_c: f64,
    pub phi_c: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<(f64, f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fracs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotManifest {
    pub classification: MotionClass,
    pub policy: CompositionPolicy,
    pub seed: u64,
    pub segments: Vec<SegmentManifest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub keyframes: Vec<Keyframe>,
    pub poses: Vec<RigidTransform>,
    pub manifest: ShotManifest,
}

fn facing_change(a: &CharacterState, b: &CharacterState) -> f64 {
    a.facing().dot(&b.facing()).clamp(-1.0, 1.0).acos()
}

/// Classifies the motion, strings shots together and interpolates per-frame
/// camera poses.
pub fn compose_shots(
    track: &CharacterTrack,
    policy: &CompositionPolicy,
    seed: u64,
) -> Result<Composition, ShotError> {
    if track.is_empty() {
        return Err(ShotError::EmptyTrack);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ShotSpec::new(ShotKind::Arc, policy.fov, policy.aspect);
    spec.lambda_overlap = policy.lambda_overlap;
    spec.overlap_rule = policy.overlap_rule;
    spec.keyframe_interval = policy.keyframe_interval;
    spec.validate()?;
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    spec.phi_c = side * rng.random_range(25f64..65.0).to_radians();
    spec.theta_c = -rng.random_range(3f64..15.0).to_radians();
    spec.frac = rng.random_range(0.45..0.65);

    let classification = if track.root_extent() < policy.lambda_bbox {
        MotionClass::Static
    } else {
        MotionClass::LongDistance
    };
    let (keyframes, segments) = match classification {
        MotionClass::Static => compose_static(track, &mut spec, &mut rng)?,
        MotionClass::LongDistance => compose_moving(track, &spec, policy)?,
    };
    let poses = interpolate_keyframes(&keyframes, track.len())?;
    Ok(Composition {
        keyframes,
        poses,
        manifest: ShotManifest {
            classification,
            policy: *policy,
            seed,
            segments,
        },
    })
}

fn compose_static(
    track: &CharacterTrack,
    spec: &mut ShotSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Keyframe>, Vec<SegmentManifest>), ShotError> {
    let k = track.len();
    let mut keyframes: Vec<Keyframe> = Vec::new();
    let mut segments = Vec::new();
    let mut frame = 0;
    let mut frac = spec.frac;
    while frame + 1 < k || keyframes.is_empty() {
        let kind = match rng.random_range(0..3) {
            0 => ShotKind::Arc,
            1 if frac < 0.75 => ShotKind::Push,
            2 if frac > 0.35 => ShotKind::Pull,
            _ => ShotKind::Arc,
        };
        let mut s = *spec;
        s.kind = kind;
        s.seed = rng.random();
        let (shot, sweep, fracs) = match kind {
            ShotKind::Arc => {
                let sweep = rng.random_range(45f64..180.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                s.sweep_step = rng.random_range(15f64..45.0).to_radians();
                s.sweep_axis = SweepAxis::Azimuth;
                s.sweep_range = (spec.phi_c, spec.phi_c + sweep);
                s.frac = frac;
                let kfs = generate_arc_shot(track, &s, frame)?;
                let sw = steps(s.sweep_range.0, s.sweep_range.1, s.sweep_step)?;
                spec.phi_c = wrap(*sw.last().expect("nonempty"));
                (kfs, Some((s.sweep_range.0, s.sweep_range.1, s.sweep_step)), None)
            }
            ShotKind::Push | ShotKind::Pull => {
                let delta = rng.random_range(0.2..0.4);
                let target = if kind == ShotKind::Push { (frac + delta).min(0.85) } else { (frac - delta).max(0.25) };
                s.frac_range = (frac, target);
                s.frac_step = 0.05;
                s.random_frac = false;
                let kfs = dolly_shot(track, &s, frame, kind == ShotKind::Push)?;
                let fr = frac_sequence(&s, kind == ShotKind::Push)?;
                frac = *fr.last().expect("nonempty");
                (kfs, None, Some(fr))
            }
            _ => unreachable!("static scenes only use arc and dolly shots"),
        };
        let skip = usize::from(!keyframes.is_empty());
        let kept: Vec<Keyframe> = shot.into_iter().skip(skip).filter(|kf| kf.frame_index < k).collect();
        let Some(last) = kept.last().copied() else { break };
        let r_c = (last.camera_pose.translation - track.state(last.frame_index).position).norm();
        segments.push(SegmentManifest {
            kind,
            start_frame: frame,
            end_frame: last.frame_index,
            keyframes: kept.iter().map(|kf| kf.frame_index).collect(),
            r_c,
            theta_c: spec.theta_c,
            phi_c: spec.phi_c,
            sweep,
            fracs,
        });
        frame = last.frame_index;
        keyframes.extend(kept);
    }
    Ok((keyframes, segments))
}

enum Mode {
    Tracking(SphericalCameraState),
    Pan(Vec3),
}

fn compose_moving(
    track: &CharacterTrack,
    spec: &ShotSpec,
    policy: &CompositionPolicy,
) -> Result<(Vec<Keyframe>, Vec<SegmentManifest>), ShotError> {
    let k = track.len();
    let r = framed_radius(track, 0, spec.theta_c, spec.phi_c, spec.frac, spec)?;
    let mut mode = Mode::Tracking(SphericalCameraState::new(r, spec.theta_c, spec.phi_c)?);
    let camera_for = |mode: &Mode, f: usize| match mode {
        Mode::Tracking(rel) => spherical_to_world(track.state(f), rel),
        Mode::Pan(eye) => look_at(eye, &track.state(f).position),
    };
    let segment_for = |mode: &Mode, start: usize| {
        let (kind, rel) = match mode {
            Mode::Tracking(rel) => (ShotKind::Tracking, *rel),
            Mode::Pan(eye) => (
                ShotKind::Pan,
                SphericalCameraState::relative_to(track.state(start), eye)
                    .unwrap_or(SphericalCameraState { r_c: 0.0, theta_c: 0.0, phi_c: 0.0 }),
            ),
        };
        SegmentManifest {
            kind,
            start_frame: start,
            end_frame: start,
            keyframes: vec![start],
            r_c: rel.r_c,
            theta_c: rel.theta_c,
            phi_c: rel.phi_c,
            sweep: None,
            fracs: None,
        }
    };

    let first = camera_for(&mode, 0)?;
    let mut keyframes = vec![Keyframe { frame_index: 0, camera_pose: first }];
    let mut last = FollowState::new(track, 0, first);
    let mut segments = vec![segment_for(&mode, 0)];

    for f in 1..k {
        let switch = match &mode {
            Mode::Tracking(_) => {
                facing_change(track.state(f), track.state(last.frame)) >= policy.lambda_angle
            }
            Mode::Pan(_) => {
                let settle = policy.settle_frames.max(1);
                f >= last.frame + settle
                    && facing_change(track.state(f), track.state(f - settle)) < policy.lambda_angle / 4.0
            }
        };
        let emit;
        if switch {
            let eye = last_camera_position(&keyframes);
            mode = match mode {
                Mode::Tracking(_) => Mode::Pan(eye),
                Mode::Pan(eye) => Mode::Tracking(SphericalCameraState::relative_to(track.state(f), &eye)?),
            };
            segments.push(segment_for(&mode, f));
            emit = true;
        } else {
            emit = spec.overlap_rule.fires(last.overlap(track, f), spec.lambda_overlap) || f + 1 == k;
        }
        if emit {
            let cam = camera_for(&mode, f)?;
            keyframes.push(Keyframe { frame_index: f, camera_pose: cam });
            last = FollowState::new(track, f, cam);
            let seg = segments.last_mut().expect("one segment open");
            if seg.keyframes.last() != Some(&f) {
                seg.keyframes.push(f);
            }
        }
        segments.last_mut().expect("one segment open").end_frame = f;
    }
    Ok((keyframes, segments))
}

fn last_camera_position(keyframes: &[Keyframe]) -> Vec3 {
    keyframes.last().expect("at least one keyframe").camera_pose.translation
}
