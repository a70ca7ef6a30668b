//! Rotation and rigid-transform algebra, plus the Umeyama similarity solver.
//!
//! Rotations are stored as 3×3 matrices. File formats carry axis-angle
//! vectors; conversion happens at the I/O boundary.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, UnitQuaternion, Vector3, SVD};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance used when validating user-supplied rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Smallest accepted ratio between the second and first principal
/// variances of a point set before it is treated as collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a proper rotation (orthonormality error {orthonormality:.3e}, det {det:.6})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point set length mismatch: source {source_len}, target {target_len}")]
    LengthMismatch { source_len: usize, target_len: usize },
}

/// A proper rotation matrix (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and determinant within [`ORTHONORMAL_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let orthonormality = (m * m.transpose() - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !orthonormality.is_finite()
            || orthonormality > ORTHONORMAL_TOL
            || (det - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(GeometryError::NotARotation {
                orthonormality,
                det,
            });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix already known to be a rotation (products of rotations,
    /// SVD-derived factors).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rotation of `|v|` radians about `v / |v|`.
    pub fn from_axis_angle(v: &Vec3) -> Self {
        Self(*nalgebra::Rotation3::from_scaled_axis(*v).matrix())
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(&(Vec3::x() * angle))
    }

    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(&(Vec3::y() * angle))
    }

    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&(Vec3::z() * angle))
    }

    /// Axis-angle vector (axis scaled by angle in radians, angle in [0, π]).
    pub fn to_axis_angle(&self) -> Vec3 {
        let m = &self.0;
        // sin(θ)·axis from the skew part, cos(θ) from the trace.
        let v = Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        ) * 0.5;
        let s = v.norm();
        let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let angle = s.atan2(c);
        if s < 1e-300 && c > 0.0 {
            return Vec3::zeros();
        }
        if c > -0.9 {
            return v * (angle / s);
        }
        // Near π the skew part vanishes; read the axis off R + Rᵀ = 2c I + 2(1 − c) a aᵀ.
        let b = (m + m.transpose()) * 0.5 - Matrix3::identity() * c;
        let i = (0..3)
            .max_by(|&a, &b2| b[(a, a)].total_cmp(&b[(b2, b2)]))
            .unwrap_or(0);
        let mut axis = b.column(i).into_owned();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        axis.normalize() * angle
    }

    /// Quaternion components in `[x, y, z, w]` order with `w >= 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&self.to_nalgebra());
        let c = q.coords;
        if c.w < 0.0 {
            [-c.x, -c.y, -c.z, -c.w]
        } else {
            [c.x, c.y, c.z, c.w]
        }
    }

    pub fn from_quaternion(xyzw: [f64; 4]) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            xyzw[3], xyzw[0], xyzw[1], xyzw[2],
        ));
        Self(*q.to_rotation_matrix().matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Geodesic angle between two rotations, radians.
    pub fn angle_to(&self, other: &Rotation3) -> f64 {
        (self.inverse() * *other).to_axis_angle().norm()
    }

    /// Spherical linear interpolation; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn slerp(&self, other: &Rotation3, t: f64) -> Self {
        if t == 0.0 {
            return *self;
        }
        if t == 1.0 {
            return *other;
        }
        let delta = (self.inverse() * *other).to_axis_angle();
        *self * Self::from_axis_angle(&(delta * t))
    }

    /// Largest elementwise deviation of `R Rᵀ` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).abs().max()
    }

    fn to_nalgebra(self) -> nalgebra::Rotation3<f64> {
        nalgebra::Rotation3::from_matrix_unchecked(self.0)
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;

    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation3 {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation3 {
    type Output = Vec3;

    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Element of SE(3): `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation3::identity(), translation)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rotation = self.rotation.inverse();
        RigidTransform {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    pub fn apply_to_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * *p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest elementwise deviation of the homogeneous matrix from identity.
    pub fn deviation_from_identity(&self) -> f64 {
        (self.to_homogeneous() - Matrix4::identity()).abs().max()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// `x ↦ s R x + t` with `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * *p * self.scale + self.translation
    }

    /// `Σᵢ ‖target_i − (s R source_i + t)‖²`.
    pub fn sum_squared_residual(&self, source: &[Vec3], target: &[Vec3]) -> f64 {
        source
            .iter()
            .zip(target)
            .map(|(s, t)| (t - self.apply(s)).norm_squared())
            .sum()
    }
}

/// Closed-form least-squares similarity (or rigid, when `with_scale` is
/// false) mapping `source` onto `target`.
///
/// Collinear, coincident, or too-small point sets are rejected: the rotation
/// about the common line is unobservable there.
pub fn umeyama_align(
    source: &[Vec3],
    target: &[Vec3],
    with_scale: bool,
) -> Result<SimilarityTransform, GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::LengthMismatch {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "need at least 3 point pairs, got {n}"
        )));
    }
    if source.iter().chain(target).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(GeometryError::DegenerateConfiguration(
            "non-finite coordinate".into(),
        ));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = source.iter().sum::<Vec3>() * inv_n;
    let mu_t = target.iter().sum::<Vec3>() * inv_n;

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        let dt = t - mu_t;
        cross += dt * ds.transpose();
        scatter += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cross *= inv_n;
    scatter *= inv_n;
    var_s *= inv_n;

    let magnitude = 1.0 + mu_s.norm_squared();
    if var_s <= 1e-24 * magnitude {
        return Err(GeometryError::DegenerateConfiguration(
            "source points are coincident".into(),
        ));
    }
    let mut eig = SymmetricEigen::new(scatter).eigenvalues;
    eig.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if eig[1] <= COLLINEAR_RATIO * eig[0] {
        return Err(GeometryError::DegenerateConfiguration(
            "source points are collinear".into(),
        ));
    }

    let svd = SVD::new(cross, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(GeometryError::DegenerateConfiguration(
                "SVD of cross-covariance did not converge".into(),
            ))
        }
    };
    // nalgebra does not order singular values; find the smallest one.
    let sv = svd.singular_values;
    let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap_or(2);
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        sign[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = if with_scale {
        sv.component_mul(&sign).sum() / var_s
    } else {
        1.0
    };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "target collapses under alignment (scale {scale})"
        )));
    }
    let rotation = Rotation3::from_matrix_unchecked(rotation);
    let translation = mu_t - rotation * mu_s * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}
