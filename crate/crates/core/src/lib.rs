//! Absolute-scale recovery of world-grounded human root and camera
//! trajectories from camera-frame human estimates and scaleless visual
//! odometry, plus a ground-truthed scene simulator and evaluation metrics.

pub mod canonical;
pub mod depth;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod joints;
pub mod metrics;
pub mod shots;
pub mod sim;
pub mod trajectory;
pub mod velocimeter;

pub use geometry::{umeyama_align, GeometryError, RigidTransform, Rotation3, SimilarityTransform, Vec3};
pub use joints::{CoordinateFrame, JointSequence, Pose, NUM_JOINTS};
pub use trajectory::{ScaleStatus, Trajectory};
