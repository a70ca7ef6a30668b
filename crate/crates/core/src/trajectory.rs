use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleStatus {
    Metric,
    Scaleless,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory must contain at least one pose")]
    Empty,
    #[error("frame rate must be positive, got {0}")]
    BadFrameRate(f64),
}

/// Time-indexed poses of a camera or a human root, expressed as
/// local-to-world transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<RigidTransform>,
    pub scale_status: ScaleStatus,
    pub frame_rate: f64,
}

impl Trajectory {
    pub fn new(
        poses: Vec<RigidTransform>,
        scale_status: ScaleStatus,
        frame_rate: f64,
    ) -> Result<Self, TrajectoryError> {
        if poses.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(TrajectoryError::BadFrameRate(frame_rate));
        }
        Ok(Self {
            poses,
            scale_status,
            frame_rate,
        })
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    /// Always false; trajectories hold at least one pose.
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Multiplies every translation by `k` (rotations untouched).
    pub fn scaled(&self, k: f64, scale_status: ScaleStatus) -> Self {
        Self {
            poses: self
                .poses
                .iter()
                .map(|p| RigidTransform::new(p.rotation, p.translation * k))
                .collect(),
            scale_status,
            frame_rate: self.frame_rate,
        }
    }

    /// Left-multiplies every pose by `tf`.
    pub fn transformed(&self, tf: &RigidTransform) -> Self {
        Self {
            poses: self.poses.iter().map(|p| tf.compose(p)).collect(),
            scale_status: self.scale_status,
            frame_rate: self.frame_rate,
        }
    }

    pub fn into_poses(self) -> Vec<RigidTransform> {
        self.poses
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_invariants() {
        assert_eq!(
            Trajectory::new(vec![], ScaleStatus::Metric, 30.0),
            Err(TrajectoryError::Empty)
        );
        assert!(Trajectory::new(vec![RigidTransform::identity()], ScaleStatus::Metric, -1.0).is_err());
    }

    #[test]
    fn scaling_touches_translations_only() {
        let p = RigidTransform::new(
            crate::geometry::Rotation3::about_z(0.4),
            Vec3::new(1.0, 2.0, 3.0),
        );
        let t = Trajectory::new(vec![p], ScaleStatus::Metric, 30.0).unwrap();
        let s = t.scaled(2.0, ScaleStatus::Scaleless);
        assert_eq!(s.poses()[0].rotation, p.rotation);
        assert_eq!(s.poses()[0].translation, Vec3::new(2.0, 4.0, 6.0));
        assert_eq!(s.scale_status, ScaleStatus::Scaleless);
    }
}
