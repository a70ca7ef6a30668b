//! Fixed 15-joint skeleton layout and joint sequences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};

pub const NUM_JOINTS: usize = 15;

/// Pelvis first, then the 14 LSP joints.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "right_ankle",
    "right_knee",
    "right_hip",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_wrist",
    "right_elbow",
    "right_shoulder",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "neck",
    "head_top",
];

pub const PELVIS: usize = 0;
pub const RIGHT_ANKLE: usize = 1;
pub const RIGHT_KNEE: usize = 2;
pub const RIGHT_HIP: usize = 3;
pub const LEFT_HIP: usize = 4;
pub const LEFT_KNEE: usize = 5;
pub const LEFT_ANKLE: usize = 6;
pub const RIGHT_WRIST: usize = 7;
pub const RIGHT_ELBOW: usize = 8;
pub const RIGHT_SHOULDER: usize = 9;
pub const LEFT_SHOULDER: usize = 10;
pub const LEFT_ELBOW: usize = 11;
pub const LEFT_WRIST: usize = 12;
pub const NECK: usize = 13;
pub const HEAD_TOP: usize = 14;

pub const DEFAULT_FRAME_RATE: f64 = 30.0;

/// One frame of joint positions.
pub type Pose = [Vec3; NUM_JOINTS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateFrame {
    Camera,
    World,
    Canonical,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JointError {
    #[error("joint sequence must contain at least one frame")]
    Empty,
    #[error("non-finite joint coordinate at frame {frame}, joint {joint}")]
    NonFinite { frame: usize, joint: usize },
    #[error("frame rate must be positive, got {0}")]
    BadFrameRate(f64),
}

/// `K × 15 × 3` joint positions in meters with a declared coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSequence {
    frames: Vec<Pose>,
    frame_rate: f64,
    coordinate_frame: CoordinateFrame,
}

impl JointSequence {
    pub fn new(
        frames: Vec<Pose>,
        frame_rate: f64,
        coordinate_frame: CoordinateFrame,
    ) -> Result<Self, JointError> {
        if frames.is_empty() {
            return Err(JointError::Empty);
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(JointError::BadFrameRate(frame_rate));
        }
        for (frame, pose) in frames.iter().enumerate() {
            if let Some(joint) = pose.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(JointError::NonFinite { frame, joint });
            }
        }
        Ok(Self {
            frames,
            frame_rate,
            coordinate_frame,
        })
    }

    pub fn frames(&self) -> &[Pose] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; sequences hold at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn coordinate_frame(&self) -> CoordinateFrame {
        self.coordinate_frame
    }

    pub fn pelvis(&self, frame: usize) -> Vec3 {
        self.frames[frame][PELVIS]
    }

    pub fn pelvis_track(&self) -> Vec<Vec3> {
        self.frames.iter().map(|p| p[PELVIS]).collect()
    }

    /// Frames `range` as a new sequence in the same coordinate frame.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, JointError> {
        Self::new(
            self.frames[range].to_vec(),
            self.frame_rate,
            self.coordinate_frame,
        )
    }

    /// Applies a per-frame rigid transform and relabels the frame.
    pub fn transformed(
        &self,
        transforms: &[RigidTransform],
        coordinate_frame: CoordinateFrame,
    ) -> Self {
        let frames = self
            .frames
            .iter()
            .zip(transforms)
            .map(|(pose, tf)| pose.map(|p| tf.apply_to_point(&p)))
            .collect();
        Self {
            frames,
            frame_rate: self.frame_rate,
            coordinate_frame,
        }
    }

    pub fn into_frames(self) -> Vec<Pose> {
        self.frames
    }
}

/// Flattens a pose into `[x0, y0, z0, x1, ...]`.
pub fn flatten_pose(pose: &Pose) -> [f64; NUM_JOINTS * 3] {
    let mut out = [0.0; NUM_JOINTS * 3];
    for (j, p) in pose.iter().enumerate() {
        out[3 * j..3 * j + 3].copy_from_slice(p.as_slice());
    }
    out
}

pub fn pose_from_rows(rows: &[[f64; 3]]) -> Option<Pose> {
    if rows.len() != NUM_JOINTS {
        return None;
    }
    let mut pose = [Vec3::zeros(); NUM_JOINTS];
    for (p, r) in pose.iter_mut().zip(rows) {
        *p = Vec3::new(r[0], r[1], r[2]);
    }
    Some(pose)
}

pub fn pose_to_rows(pose: &Pose) -> Vec<[f64; 3]> {
    pose.iter().map(|p| [p.x, p.y, p.z]).collect()
}
