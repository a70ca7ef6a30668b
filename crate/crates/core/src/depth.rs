//! Metric root depth from weak-perspective scale and camera intrinsics.
//!
//! An EHPS network reports `(s, t_x, t_y)` such that a root-relative point
//! `δ` lands at NDC `s·(t + δ)`. With the crop side `I` and focal length `f`
//! in pixels, `s = (2/I)·f/t_z`, so `t_z = (2/I)·f/s`. The principal point is
//! taken at the crop center.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rotation3, Vec3};
use crate::joints::{Pose, NUM_JOINTS};

/// Focal length commonly hard-coded by camera-frame EHPS models.
pub const DUMMY_FOCAL_PX: f64 = 5000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("weak-perspective scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("weak-perspective fit is degenerate: joint offsets have no image-plane spread")]
    DegenerateFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicSource {
    Exact,
    DiagonalHeuristic,
    Dummy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    /// Side length of the square EHPS input crop, pixels.
    pub crop_resolution: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub intrinsic_source: IntrinsicSource,
}

impl CameraIntrinsics {
    pub fn exact(
        focal_px: f64,
        crop_resolution: u32,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, DepthError> {
        Self {
            focal_px,
            crop_resolution,
            image_width,
            image_height,
            intrinsic_source: IntrinsicSource::Exact,
        }
        .validated()
    }

    /// Focal length set to the image diagonal in pixels.
    pub fn diagonal_heuristic(
        crop_resolution: u32,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, DepthError> {
        let w = f64::from(image_width);
        let h = f64::from(image_height);
        Self {
            focal_px: (w * w + h * h).sqrt(),
            crop_resolution,
            image_width,
            image_height,
            intrinsic_source: IntrinsicSource::DiagonalHeuristic,
        }
        .validated()
    }

    pub fn dummy(
        crop_resolution: u32,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, DepthError> {
        Self {
            focal_px: DUMMY_FOCAL_PX,
            crop_resolution,
            image_width,
            image_height,
            intrinsic_source: IntrinsicSource::Dummy,
        }
        .validated()
    }

    /// Same image geometry with the focal length replaced according to `source`.
    pub fn with_source(&self, source: IntrinsicSource) -> Result<Self, DepthError> {
        match source {
            IntrinsicSource::Exact => Ok(*self),
            IntrinsicSource::DiagonalHeuristic => {
                Self::diagonal_heuristic(self.crop_resolution, self.image_width, self.image_height)
            }
            IntrinsicSource::Dummy => {
                Self::dummy(self.crop_resolution, self.image_width, self.image_height)
            }
        }
    }

    pub fn validated(self) -> Result<Self, DepthError> {
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(DepthError::InvalidIntrinsics(format!(
                "focal length must be positive, got {}",
                self.focal_px
            )));
        }
        if self.crop_resolution == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(DepthError::InvalidIntrinsics(
                "crop and image dimensions must be positive".into(),
            ));
        }
        if self.intrinsic_source == IntrinsicSource::DiagonalHeuristic {
            let w = f64::from(self.image_width);
            let h = f64::from(self.image_height);
            let diag = (w * w + h * h).sqrt();
            if (self.focal_px - diag).abs() > 1e-9 * diag {
                return Err(DepthError::InvalidIntrinsics(
                    "diagonal-heuristic focal length must equal the image diagonal".into(),
                ));
            }
        }
        Ok(self)
    }

    /// Focal length in NDC units of the crop, `f* = 2f / I`.
    pub fn ndc_focal(&self) -> f64 {
        2.0 * self.focal_px / f64::from(self.crop_resolution)
    }

    pub fn aspect(&self) -> f64 {
        f64::from(self.image_width) / f64::from(self.image_height)
    }

    /// Horizontal field of view, radians.
    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (f64::from(self.image_width) / (2.0 * self.focal_px)).atan()
    }

    /// Pinhole projection of a camera-frame point (x right, y down, z forward)
    /// to pixels; `None` behind the camera.
    pub fn project_pixel(&self, p: &Vec3) -> Option<[f64; 2]> {
        if p.z <= 0.0 {
            return None;
        }
        Some([
            self.focal_px * p.x / p.z + f64::from(self.image_width) / 2.0,
            self.focal_px * p.y / p.z + f64::from(self.image_height) / 2.0,
        ])
    }

    /// Exact perspective projection into crop NDC, `f*·(x/z, y/z)`.
    pub fn project_ndc(&self, p: &Vec3) -> Option<[f64; 2]> {
        if p.z <= 0.0 {
            return None;
        }
        let fs = self.ndc_focal();
        Some([fs * p.x / p.z, fs * p.y / p.z])
    }
}

/// What an EHPS model emits for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakPerspectiveObservation {
    pub scale: f64,
    /// Camera-frame root offset along x, meters.
    pub t_x: f64,
    /// Camera-frame root offset along y, meters.
    pub t_y: f64,
    pub global_orientation: Rotation3,
    /// Root-relative joint offsets in the camera frame, meters.
    pub joints_camera: Pose,
}

impl WeakPerspectiveObservation {
    /// Camera-frame joint positions given a root translation.
    pub fn joints_at(&self, root: &Vec3) -> Pose {
        self.joints_camera.map(|d| root + d)
    }
}

pub fn recover_root_depth(
    obs: &WeakPerspectiveObservation,
    cam: &CameraIntrinsics,
) -> Result<f64, DepthError> {
    if !(obs.scale > 0.0) || !obs.scale.is_finite() {
        return Err(DepthError::NonPositiveScale(obs.scale));
    }
    Ok(2.0 / f64::from(cam.crop_resolution) * (cam.focal_px / obs.scale))
}

/// `t^c_h = (t_x, t_y, t_z)` with `t_z` from [`recover_root_depth`].
pub fn root_translation_camera(
    obs: &WeakPerspectiveObservation,
    cam: &CameraIntrinsics,
) -> Result<Vec3, DepthError> {
    Ok(Vec3::new(obs.t_x, obs.t_y, recover_root_depth(obs, cam)?))
}

/// Weak-perspective NDC projection `s·(t + δ)` of a root-relative point.
pub fn project_weak_perspective(point_offset: &Vec3, obs: &WeakPerspectiveObservation) -> [f64; 2] {
    [
        obs.scale * (obs.t_x + point_offset.x),
        obs.scale * (obs.t_y + point_offset.y),
    ]
}

/// Weak-perspective camera parameters `(s, t_x, t_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakPerspectiveFit {
    pub scale: f64,
    pub t_x: f64,
    pub t_y: f64,
}

/// Least-squares `(s, t_x, t_y)` reproducing NDC observations `ndc[j]` from
/// root-relative offsets `offsets[j]`, i.e. the camera head of an ideal EHPS
/// model looking at a perspective image.
pub fn fit_weak_perspective(
    offsets: &[Vec3; NUM_JOINTS],
    ndc: &[[f64; 2]; NUM_JOINTS],
) -> Result<WeakPerspectiveFit, DepthError> {
    let n = NUM_JOINTS as f64;
    let (mut dx, mut dy, mut u, mut v) = (0.0, 0.0, 0.0, 0.0);
    for (d, p) in offsets.iter().zip(ndc) {
        dx += d.x;
        dy += d.y;
        u += p[0];
        v += p[1];
    }
    dx /= n;
    dy /= n;
    u /= n;
    v /= n;
    let (mut num, mut den) = (0.0, 0.0);
    for (d, p) in offsets.iter().zip(ndc) {
        let (cx, cy) = (d.x - dx, d.y - dy);
        num += cx * (p[0] - u) + cy * (p[1] - v);
        den += cx * cx + cy * cy;
    }
    if den <= 1e-18 {
        return Err(DepthError::DegenerateFit);
    }
    let scale = num / den;
    if !(scale > 0.0) {
        return Err(DepthError::NonPositiveScale(scale));
    }
    Ok(WeakPerspectiveFit {
        scale,
        t_x: (u - scale * dx) / scale,
        t_y: (v - scale * dy) / scale,
    })
}
