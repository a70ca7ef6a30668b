//! World lifting, canonicalization and velocity integration.
//!
//! The canonical frame of a sequence uses one rotation for every frame, the
//! inverse of the subject's frame-0 global orientation, and a per-frame
//! translation that puts that frame's pelvis at the origin. Body rotation
//! between frames therefore survives canonicalization while root position
//! does not.

use thiserror::Error;

use crate::geometry::{RigidTransform, Rotation3, Vec3};
use crate::joints::{CoordinateFrame, JointError, JointSequence, PELVIS};
use crate::trajectory::Trajectory;

/// First VO pose must match identity to this tolerance.
pub const FIRST_FRAME_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("first visual-odometry pose deviates from identity by {0:.3e}")]
    NonIdentityFirstFrame(f64),
    #[error("expected joints in {expected:?} frame, got {got:?}")]
    WrongFrame {
        expected: CoordinateFrame,
        got: CoordinateFrame,
    },
    #[error(transparent)]
    Joints(#[from] JointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityFrame {
    Canonical,
    World,
}

/// Per-frame root displacements; entry `i - 1` holds `p_i − p_{i−1}`
/// (meters per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySequence {
    pub velocities: Vec<Vec3>,
    pub frame: VelocityFrame,
}

impl VelocitySequence {
    pub fn new(velocities: Vec<Vec3>, frame: VelocityFrame) -> Self {
        Self { velocities, frame }
    }

    /// Finite differences of a position track.
    pub fn from_positions(positions: &[Vec3], frame: VelocityFrame) -> Self {
        Self {
            velocities: positions.windows(2).map(|w| w[1] - w[0]).collect(),
            frame,
        }
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTransformSequence {
    pub shared_rotation: Rotation3,
    /// `−p^w_i` for every frame.
    pub per_frame_translation: Vec<Vec3>,
}

impl CanonicalTransformSequence {
    pub fn len(&self) -> usize {
        self.per_frame_translation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_frame_translation.is_empty()
    }

    /// World-to-canonical transform of frame `i`: `x ↦ R (x + t_i)`.
    pub fn world_to_canonical(&self, i: usize) -> RigidTransform {
        RigidTransform::new(
            self.shared_rotation,
            self.shared_rotation * self.per_frame_translation[i],
        )
    }
}

fn expect_frame(joints: &JointSequence, expected: CoordinateFrame) -> Result<(), CanonicalError> {
    if joints.coordinate_frame() != expected {
        return Err(CanonicalError::WrongFrame {
            expected,
            got: joints.coordinate_frame(),
        });
    }
    Ok(())
}

/// `J^w_i = T^vo_i · J^c_i`. The world frame is camera frame 0.
pub fn joints_to_world(
    joints: &JointSequence,
    vo: &Trajectory,
) -> Result<JointSequence, CanonicalError> {
    expect_frame(joints, CoordinateFrame::Camera)?;
    if joints.len() != vo.len() {
        return Err(CanonicalError::LengthMismatch {
            expected: joints.len(),
            got: vo.len(),
        });
    }
    let deviation = vo.poses()[0].deviation_from_identity();
    if deviation > FIRST_FRAME_TOL {
        return Err(CanonicalError::NonIdentityFirstFrame(deviation));
    }
    Ok(joints.transformed(vo.poses(), CoordinateFrame::World))
}

pub fn canonical_transform(
    joints_world: &JointSequence,
    global_orientation_frame0: &Rotation3,
) -> Result<CanonicalTransformSequence, CanonicalError> {
    expect_frame(joints_world, CoordinateFrame::World)?;
    Ok(CanonicalTransformSequence {
        shared_rotation: global_orientation_frame0.inverse(),
        per_frame_translation: joints_world
            .frames()
            .iter()
            .map(|pose| -pose[PELVIS])
            .collect(),
    })
}

/// `J^cano_i = R^cano (J^w_i − p^w_i)`.
pub fn canonicalize_joints(
    joints_world: &JointSequence,
    tf: &CanonicalTransformSequence,
) -> Result<JointSequence, CanonicalError> {
    expect_frame(joints_world, CoordinateFrame::World)?;
    if joints_world.len() != tf.len() {
        return Err(CanonicalError::LengthMismatch {
            expected: joints_world.len(),
            got: tf.len(),
        });
    }
    let frames = joints_world
        .frames()
        .iter()
        .zip(&tf.per_frame_translation)
        .map(|(pose, t)| pose.map(|p| tf.shared_rotation * (p + t)))
        .collect();
    Ok(JointSequence::new(
        frames,
        joints_world.frame_rate(),
        CoordinateFrame::Canonical,
    )?)
}

/// Rotates canonical displacements back to the world. The per-frame
/// translations of the canonical transform cancel for displacement vectors.
pub fn decanonicalize_velocity(
    v: &VelocitySequence,
    tf: &CanonicalTransformSequence,
) -> Result<VelocitySequence, CanonicalError> {
    if v.frame != VelocityFrame::Canonical {
        return Err(CanonicalError::WrongFrame {
            expected: CoordinateFrame::Canonical,
            got: CoordinateFrame::World,
        });
    }
    let back = tf.shared_rotation.inverse();
    Ok(VelocitySequence::new(
        v.velocities.iter().map(|d| back * *d).collect(),
        VelocityFrame::World,
    ))
}

/// Cumulative sum: `p_0 = initial_root`, `p_i = p_{i−1} + v_i`.
pub fn integrate_velocities(v: &VelocitySequence, initial_root: Vec3) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(initial_root);
    let mut p = initial_root;
    for d in &v.velocities {
        p += d;
        out.push(p);
    }
    out
}
