//! Camera and radar geometry.
//!
//! Frames share one axis convention: x right, y down, z forward. A radar
//! frame whose axes and origin coincide with the camera is therefore the
//! identity [`RigidTransform`], which is the setting of the angular error
//! model below.
//!
//! Spherical radar coordinates use azimuth `θ` measured from the forward
//! axis toward +x, and elevation `φ` measured upward (toward −y):
//!
//! ```text
//! x =  ρ cosφ sinθ      (lateral)
//! y = −ρ sinφ           (vertical, down positive)
//! z =  ρ cosφ cosθ      (forward / depth)
//! ```

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid(format!(
                "focal lengths must be positive and finite (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        [
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }

    /// Closed-form `K⁻¹`.
    pub fn inverse(&self) -> Result<Mat3> {
        if self.fx == 0.0 || self.fy == 0.0 {
            return Err(Error::Singular(
                "intrinsic matrix with zero focal length".into(),
            ));
        }
        Ok([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])
    }

    /// Geometric-mean focal length `sqrt(fx·fy)`.
    pub fn mean_focal(&self) -> f64 {
        (self.fx * self.fy).sqrt()
    }
}

/// `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl RigidTransform {
    const ORTHO_TOL: f64 = 1e-6;

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > Self::ORTHO_TOL {
                    return Err(Error::invalid(format!(
                        "rotation is not orthonormal (RᵀR[{i}][{j}] = {dot})"
                    )));
                }
            }
        }
        if det3(&rotation) <= 0.0 {
            return Err(Error::invalid("rotation has negative determinant"));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation_only(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Parses a 4x4 homogeneous matrix given as 16 row-major numbers.
    pub fn from_row_major(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::invalid(format!(
                "a 4x4 transform needs 16 numbers, got {}",
                m.len()
            )));
        }
        let last = &m[12..16];
        if last
            .iter()
            .zip([0.0, 0.0, 0.0, 1.0])
            .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::invalid(format!(
                "last row of a rigid transform must be 0 0 0 1, got {last:?}"
            )));
        }
        let rotation = [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]];
        Self::new(rotation, [m[3], m[7], m[11]])
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], //
            r[1][0], r[1][1], r[1][2], t[1], //
            r[2][0], r[2][1], r[2][2], t[2], //
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = &self.translation;
        let neg_rt_t = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Self {
            rotation: rt,
            translation: neg_rt_t,
        }
    }
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn transform_point(point: Vec3, transform: &RigidTransform) -> Vec3 {
    transform.apply(point)
}

/// A radar measurement in spherical coordinates (range in meters, angles in
/// radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl SphericalPoint {
    pub fn new(range: f64, azimuth: f64, elevation: f64) -> Result<Self> {
        if !(range >= 0.0) || !range.is_finite() {
            return Err(Error::invalid(format!(
                "range must be non-negative, got {range}"
            )));
        }
        if !(azimuth.abs() < FRAC_PI_2) || !(elevation.abs() < FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "angles must lie in (-π/2, π/2), got azimuth {azimuth}, elevation {elevation}"
            )));
        }
        Ok(Self {
            range,
            azimuth,
            elevation,
        })
    }

    pub fn from_degrees(range: f64, azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        Self::new(range, azimuth_deg.to_radians(), elevation_deg.to_radians())
    }
}

pub fn spherical_to_cartesian(p: &SphericalPoint) -> Vec3 {
    let horizontal = p.range * p.elevation.cos();
    [
        horizontal * p.azimuth.sin(),
        -p.range * p.elevation.sin(),
        horizontal * p.azimuth.cos(),
    ]
}

/// Inverse of [`spherical_to_cartesian`]. The origin maps to range 0 with
/// zero angles.
pub fn cartesian_to_spherical(p: Vec3) -> SphericalPoint {
    let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if range == 0.0 {
        return SphericalPoint {
            range: 0.0,
            azimuth: 0.0,
            elevation: 0.0,
        };
    }
    SphericalPoint {
        range,
        azimuth: p[0].atan2(p[2]),
        elevation: (-p[1] / range).clamp(-1.0, 1.0).asin(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularResolution {
    pub delta_theta: f64,
    pub delta_phi: f64,
}

impl AngularResolution {
    pub fn new(delta_theta: f64, delta_phi: f64) -> Result<Self> {
        if !(delta_theta > 0.0 && delta_phi > 0.0) {
            return Err(Error::invalid(format!(
                "angular resolutions must be positive (Δθ = {delta_theta}, Δφ = {delta_phi})"
            )));
        }
        Ok(Self {
            delta_theta,
            delta_phi,
        })
    }

    pub fn from_degrees(delta_theta_deg: f64, delta_phi_deg: f64) -> Result<Self> {
        Self::new(delta_theta_deg.to_radians(), delta_phi_deg.to_radians())
    }
}

/// Continuous pixel coordinates plus depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

pub fn project_to_pixel(point: Vec3, k: &CameraIntrinsics) -> Result<PixelProjection> {
    let [x, y, z] = point;
    if !(z > 0.0) {
        return Err(Error::BehindCamera { z });
    }
    Ok(PixelProjection {
        u: k.fx * x / z + k.cx,
        v: k.fy * y / z + k.cy,
        depth: z,
    })
}

/// Back-projects `(u, v, d)` through `K⁻¹` to a camera-frame point.
pub fn unproject(p: &PixelProjection, k: &CameraIntrinsics) -> Vec3 {
    [
        (p.u - k.cx) / k.fx * p.depth,
        (p.v - k.cy) / k.fy * p.depth,
        p.depth,
    ]
}

/// Intrinsics for a feature map downsampled by `factor`.
pub fn scale_intrinsics(k: &CameraIntrinsics, factor: f64) -> Result<CameraIntrinsics> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::invalid(format!(
            "downsample factor must be positive, got {factor}"
        )));
    }
    Ok(CameraIntrinsics {
        fx: k.fx / factor,
        fy: k.fy / factor,
        cx: k.cx / factor,
        cy: k.cy / factor,
    })
}

/// Maximum projected position error of a radar point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PixelError {
    pub e_u: f64,
    pub e_v: f64,
    pub e: f64,
}

/// `e_u = fx·Δθ`, `e_v = fy·Δφ`, `e = sqrt(fx·fy)·sqrt(Δθ² + Δφ²)`.
pub fn max_pixel_position_error(k: &CameraIntrinsics, res: &AngularResolution) -> PixelError {
    PixelError {
        e_u: k.fx * res.delta_theta,
        e_v: k.fy * res.delta_phi,
        e: k.mean_focal() * res.delta_theta.hypot(res.delta_phi),
    }
}

/// Horizontal pixel distance between the projection of `p` and of `p` with
/// its azimuth advanced by one resolution step (radar and camera aligned).
pub fn empirical_projection_error(
    p: &SphericalPoint,
    res: &AngularResolution,
    k: &CameraIntrinsics,
) -> Result<f64> {
    let base = project_to_pixel(spherical_to_cartesian(p), k)?;
    let stepped = SphericalPoint {
        azimuth: p.azimuth + res.delta_theta,
        ..*p
    };
    let moved = project_to_pixel(spherical_to_cartesian(&stepped), k)?;
    Ok((moved.u - base.u).abs())
}

/// Horizontal pixel displacement produced by the lateral component of the
/// maximum tangential error: the point is shifted along x by
/// `ρ·cosφ·Δθ·cosθ` at unchanged depth, then projected.
pub fn lateral_error_projection(
    p: &SphericalPoint,
    res: &AngularResolution,
    k: &CameraIntrinsics,
) -> Result<f64> {
    let cart = spherical_to_cartesian(p);
    let tangential = p.range * p.elevation.cos() * res.delta_theta;
    let lateral = tangential * p.azimuth.cos();
    let base = project_to_pixel(cart, k)?;
    let moved = project_to_pixel([cart[0] + lateral, cart[1], cart[2]], k)?;
    Ok((moved.u - base.u).abs())
}

/// Sensor calibration: intrinsics, image size, radar-to-camera extrinsics
/// and radar angular resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    pub image_width: usize,
    pub image_height: usize,
    pub radar_to_camera: RigidTransform,
    pub resolution: AngularResolution,
}

/// On-disk JSON form of [`Calibration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub radar_to_camera: Vec<f64>,
    pub delta_theta_deg: f64,
    pub delta_phi_deg: f64,
}

impl Calibration {
    pub fn from_file_repr(f: &CalibrationFile) -> Result<Self> {
        if f.image_width == 0 || f.image_height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(Self {
            intrinsics: CameraIntrinsics::new(f.fx, f.fy, f.cx, f.cy)?,
            image_width: f.image_width,
            image_height: f.image_height,
            radar_to_camera: RigidTransform::from_row_major(&f.radar_to_camera)?,
            resolution: AngularResolution::from_degrees(f.delta_theta_deg, f.delta_phi_deg)?,
        })
    }

    pub fn to_file_repr(&self) -> CalibrationFile {
        CalibrationFile {
            fx: self.intrinsics.fx,
            fy: self.intrinsics.fy,
            cx: self.intrinsics.cx,
            cy: self.intrinsics.cy,
            image_width: self.image_width,
            image_height: self.image_height,
            radar_to_camera: self.radar_to_camera.to_row_major().to_vec(),
            delta_theta_deg: self.resolution.delta_theta.to_degrees(),
            delta_phi_deg: self.resolution.delta_phi.to_degrees(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: CalibrationFile = serde_json::from_str(s)?;
        Self::from_file_repr(&f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.as_ref().display()),
            ))
        })?;
        Self::from_json_str(&text)
    }

    /// Projects a radar-frame point into full-resolution pixels.
    pub fn project_radar_point(&self, p: Vec3) -> Result<PixelProjection> {
        project_to_pixel(self.radar_to_camera.apply(p), &self.intrinsics)
    }
}
