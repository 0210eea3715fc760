//! Rigid transforms and image-plane coordinate mapping.
//!
//! Convention: right-handed world frame in millimetres. An image plane lives
//! in the local xy-plane of its pose, x running along columns (lateral) and
//! y along rows (axial depth, away from the probe face). Local z is the
//! elevation normal. Pixel `(0, 0)` sits at the pose origin.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on `RᵀR = I` and `det R = 1` for a rotation to count as valid.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid transform `x ↦ R x + t`, translation in millimetres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from an orthonormal matrix, rejecting anything that is
    /// not a proper rotation within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Rotation of `angle` radians about `axis` through the origin.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        Self::from_rotation(Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: the returned pose maps `x ↦ self(other(x))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Local axis `i` (0 = lateral, 1 = axial, 2 = normal) in world space.
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.rotation.matrix().column(i).into_owned()
    }

    /// Rotation angle of `self⁻¹ ∘ other` in radians.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        let r = (self.rotation.inverse() * other.rotation).into_inner();
        // atan2 of the skew and trace parts stays accurate near identity
        let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() * 0.5;
        let c = (r.trace() - 1.0) * 0.5;
        s.atan2(c)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn approx_eq(&self, other: &Pose, tol_mm: f64, tol_rad: f64) -> bool {
        self.distance_to(other) <= tol_mm && self.angle_to(other) <= tol_rad
    }

    /// Homogeneous 4×4 matrix, row-major.
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Parses a homogeneous 4×4 row-major matrix. The rotation block is used
    /// verbatim (no re-orthonormalisation) so that serialisation round-trips
    /// bit-exactly.
    pub fn from_row_major(m: &[f64]) -> Result<Pose> {
        if m.len() != 16 {
            return Err(Error::InvalidPose(format!(
                "expected 16 matrix entries, got {}",
                m.len()
            )));
        }
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidPose(format!(
                "last row must be 0 0 0 1, got {bottom:?}"
            )));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Pose::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Vec::<f64>::deserialize(d)?;
        Pose::from_row_major(&m).map_err(serde::de::Error::custom)
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPose("non-finite rotation".into()));
    }
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if err > ROTATION_TOLERANCE {
        return Err(Error::InvalidPose(format!(
            "rotation not orthonormal (max |RᵀR - I| = {err:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidPose(format!(
            "rotation determinant {det} (reflection or scaling)"
        )));
    }
    Ok(())
}

/// Pixel grid of a 2D ultrasound image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    /// Isotropic pixel size, mm.
    pub spacing: f64,
    /// Imaging depth covered by the rows, mm.
    pub depth: f64,
    pub aspect_ratio: f64,
}

impl ImageGeometry {
    /// Geometry of a `width × height` grid; depth and aspect ratio follow.
    pub fn new(width: usize, height: usize, spacing: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGeometry("empty image".into()));
        }
        Self {
            width,
            height,
            spacing,
            depth: height as f64 * spacing,
            aspect_ratio: width as f64 / height as f64,
        }
        .validated()
    }

    /// Geometry of a crop given imaging depth and width/height aspect ratio:
    /// `height = depth / spacing`, `width = round(height × aspect)`.
    pub fn from_depth(depth: f64, aspect_ratio: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(depth > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "depth {depth} and spacing {spacing} must be positive"
            )));
        }
        let height = (depth / spacing).round() as usize;
        let width = (height as f64 * aspect_ratio).round() as usize;
        Self {
            width,
            height,
            spacing,
            depth,
            aspect_ratio,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "spacing must be > 0, got {}",
                self.spacing
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGeometry("empty image".into()));
        }
        if !(self.aspect_ratio > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "aspect ratio must be > 0, got {}",
                self.aspect_ratio
            )));
        }
        if (self.depth - self.height as f64 * self.spacing).abs() > self.spacing {
            return Err(Error::InvalidGeometry(format!(
                "depth {} mm inconsistent with {} rows at {} mm",
                self.depth, self.height, self.spacing
            )));
        }
        Ok(self)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Plane-local position (mm) of the image centre.
    pub fn center_local(&self) -> Vector3<f64> {
        Vector3::new(
            (self.width as f64 - 1.0) * 0.5 * self.spacing,
            (self.height as f64 - 1.0) * 0.5 * self.spacing,
            0.0,
        )
    }
}

/// World position of pixel `px = (column, row)` on an image placed by `pose`.
pub fn pixel_to_world(g: &ImageGeometry, pose: &Pose, px: [f64; 2]) -> Result<Vector3<f64>> {
    let [x, y] = px;
    if !(x >= 0.0 && x < g.width as f64 && y >= 0.0 && y < g.height as f64) {
        return Err(Error::PixelOutOfBounds {
            x,
            y,
            width: g.width,
            height: g.height,
        });
    }
    Ok(pose.transform_point(&Vector3::new(x * g.spacing, y * g.spacing, 0.0)))
}

/// Affine pixel → world map for images derived from a posed frame by cropping
/// and resampling. Column `u`, row `v` map to
/// `pose(offset + (u·spacing[0], v·spacing[1], 0))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneMapping {
    pub pose: Pose,
    pub spacing: [f64; 2],
    pub offset: [f64; 2],
}

impl PlaneMapping {
    pub fn new(pose: Pose, g: &ImageGeometry) -> Self {
        Self {
            pose,
            spacing: [g.spacing, g.spacing],
            offset: [0.0, 0.0],
        }
    }

    pub fn local(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(
            self.offset[0] + u * self.spacing[0],
            self.offset[1] + v * self.spacing[1],
            0.0,
        )
    }

    pub fn to_world(&self, u: f64, v: f64) -> Vector3<f64> {
        self.pose.transform_point(&self.local(u, v))
    }

    /// Mapping of the sub-image starting at pixel `(x0, y0)`.
    pub fn cropped(&self, x0: usize, y0: usize) -> Self {
        Self {
            offset: [
                self.offset[0] + x0 as f64 * self.spacing[0],
                self.offset[1] + y0 as f64 * self.spacing[1],
            ],
            ..*self
        }
    }

    /// Mapping after resampling a `from` sized image to `to` with pixel
    /// centres aligned (see [`crate::image::Image::resize_bilinear`]).
    pub fn resized(&self, from: (usize, usize), to: (usize, usize)) -> Self {
        let rx = from.0 as f64 / to.0 as f64;
        let ry = from.1 as f64 / to.1 as f64;
        Self {
            pose: self.pose,
            spacing: [self.spacing[0] * rx, self.spacing[1] * ry],
            offset: [
                self.offset[0] + self.spacing[0] * (0.5 * rx - 0.5),
                self.offset[1] + self.spacing[1] * (0.5 * ry - 0.5),
            ],
        }
    }

    /// Mapping of the horizontally mirrored image of width `width`.
    pub fn hflipped(&self, width: usize) -> Self {
        // u' = width - 1 - u, so local x = offset + (width-1)·s - u·s
        let flip = Pose::from_rotation(Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI));
        // Rotating π about the axial axis negates local x and z; the plane
        // stays the same set of points.
        let x_end = self.offset[0] + (width as f64 - 1.0) * self.spacing[0];
        let shift = Pose::from_translation(Vector3::new(x_end, 0.0, 0.0));
        Self {
            pose: self.pose.compose(&shift).compose(&flip),
            spacing: self.spacing,
            offset: [0.0, self.offset[1]],
        }
    }
}
