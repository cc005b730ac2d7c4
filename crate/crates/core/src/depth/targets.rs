use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Calibration, CameraIntrinsics, Vec3};
use crate::tensor::Tensor;

/// A radar detection in the radar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Radar cross section in dBsm.
    #[serde(default)]
    pub rcs_dbsm: Option<f64>,
    /// Radial velocity in m/s. Carried through, never used.
    #[serde(default)]
    pub doppler: Option<f64>,
}

impl RadarPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            rcs_dbsm: None,
            doppler: None,
        }
    }

    pub fn with_rcs(mut self, rcs_dbsm: f64) -> Self {
        self.rcs_dbsm = Some(rcs_dbsm);
        self
    }

    pub fn position(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusConfig {
    pub k: f64,
    /// Upper clamp on the radius, in feature-map pixels.
    pub r_max: f64,
    /// Radius used when a point carries no RCS.
    pub fixed_r: Option<f64>,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        Self {
            k: 0.1,
            r_max: 2.0,
            fixed_r: Some(2.0),
        }
    }
}

impl RadiusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::invalid(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        if !(self.r_max >= 0.0) {
            return Err(Error::invalid(format!(
                "r_max must be ≥ 0, got {}",
                self.r_max
            )));
        }
        if let Some(r) = self.fixed_r {
            if !(r >= 0.0) {
                return Err(Error::invalid(format!("fixed_r must be ≥ 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// Neighborhood radius, in pixels of a feature map at `stride`, for a point
/// at camera depth `depth`:
///
/// `r = min(r_max, k·sqrt(fx·fy) / (stride·depth) · 10^(rcs/20))`
///
/// Without an RCS value the configured `fixed_r` is used (also clamped to
/// `r_max`). `intrinsics` are those of the full-resolution image.
pub fn neighborhood_radius(
    depth: f64,
    rcs_dbsm: Option<f64>,
    intrinsics: &CameraIntrinsics,
    stride: usize,
    cfg: &RadiusConfig,
) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(Error::invalid(format!(
            "depth must be positive, got {depth}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let raw = match (rcs_dbsm, cfg.fixed_r) {
        (Some(rcs), _) => {
            cfg.k * intrinsics.mean_focal() / (stride as f64 * depth) * 10f64.powf(rcs / 20.0)
        }
        (None, Some(r)) => r,
        (None, None) => {
            return Err(Error::invalid(
                "point has no RCS value and no fixed radius is configured",
            ))
        }
    };
    Ok(raw.min(cfg.r_max))
}

/// A sparse depth label on a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthTarget {
    pub u: usize,
    pub v: usize,
    pub d_gt: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub behind_camera: usize,
    pub outside_image: usize,
    pub no_radius: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.behind_camera + self.outside_image + self.no_radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub targets: Vec<DepthTarget>,
    pub dropped: DropCounts,
    pub feature_width: usize,
    pub feature_height: usize,
}

/// Projects radar points into a feature map at `stride`.
///
/// A point lands on feature pixel `(⌊⌊u⌋ / s⌋, ⌊⌊v⌋ / s⌋)`, so building at
/// stride `s` equals building at stride 1 and integer-dividing the pixel
/// indices. The feature map is `⌈W / s⌉ x ⌈H / s⌉`. Points behind the
/// camera or outside the full-resolution image are dropped and counted.
/// Points sharing a pixel each produce their own target.
pub fn build_depth_targets(
    points: &[RadarPoint],
    calib: &Calibration,
    stride: usize,
    cfg: &RadiusConfig,
) -> Result<TargetSet> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    cfg.validate()?;
    let feature_width = calib.image_width.div_ceil(stride);
    let feature_height = calib.image_height.div_ceil(stride);
    let mut targets = Vec::with_capacity(points.len());
    let mut dropped = DropCounts::default();
    for p in points {
        let cam = calib.radar_to_camera.apply(p.position());
        let Ok(proj) = crate::geometry::project_to_pixel(cam, &calib.intrinsics) else {
            dropped.behind_camera += 1;
            continue;
        };
        let inside = proj.u >= 0.0
            && proj.v >= 0.0
            && proj.u < calib.image_width as f64
            && proj.v < calib.image_height as f64;
        if !inside {
            dropped.outside_image += 1;
            continue;
        }
        let Ok(radius) =
            neighborhood_radius(proj.depth, p.rcs_dbsm, &calib.intrinsics, stride, cfg)
        else {
            dropped.no_radius += 1;
            continue;
        };
        targets.push(DepthTarget {
            u: proj.u.floor() as usize / stride,
            v: proj.v.floor() as usize / stride,
            d_gt: proj.depth,
            radius,
        });
    }
    Ok(TargetSet {
        targets,
        dropped,
        feature_width,
        feature_height,
    })
}

/// Packs targets into an `N x 4` tensor with rows `(u, v, d_gt, radius)`.
pub fn targets_to_tensor(targets: &[DepthTarget]) -> Tensor {
    let data = targets
        .iter()
        .flat_map(|t| [t.u as f64, t.v as f64, t.d_gt, t.radius])
        .collect();
    Tensor::new(vec![targets.len(), 4], data).expect("targets are finite")
}

pub fn targets_from_tensor(t: &Tensor) -> Result<Vec<DepthTarget>> {
    let n = match t.shape() {
        &[n, 4] => n,
        other => {
            return Err(Error::shape(format!(
                "target table must be N x 4, got {other:?}"
            )))
        }
    };
    let index = |x: f64, what: &str, row: usize| -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            Err(Error::invalid(format!(
                "target row {row}: {what} must be a non-negative integer, got {x}"
            )))
        }
    };
    (0..n)
        .map(|row| {
            let r = &t.data()[row * 4..row * 4 + 4];
            if !(r[3] >= 0.0) {
                return Err(Error::invalid(format!(
                    "target row {row}: radius must be ≥ 0, got {}",
                    r[3]
                )));
            }
            Ok(DepthTarget {
                u: index(r[0], "u", row)?,
                v: index(r[1], "v", row)?,
                d_gt: r[2],
                radius: r[3],
            })
        })
        .collect()
}

/// Reads radar points from CSV with header `x,y,z,rcs_dbsm,doppler`; the
/// last two columns may be missing or empty.
pub fn read_radar_csv_from<R: Read>(reader: R) -> Result<Vec<RadarPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, rec) in rdr.deserialize::<RadarPoint>().enumerate() {
        let p = rec?;
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::invalid(format!(
                "radar point {i} has non-finite coordinates"
            )));
        }
        points.push(p);
    }
    Ok(points)
}

pub fn read_radar_csv(path: impl AsRef<Path>) -> Result<Vec<RadarPoint>> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    read_radar_csv_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AngularResolution, RigidTransform};

    fn k1600() -> CameraIntrinsics {
        CameraIntrinsics::new(1600.0, 1600.0, 960.0, 640.0).unwrap()
    }

    fn calib_640() -> Calibration {
        Calibration {
            intrinsics: CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap(),
            image_width: 640,
            image_height: 480,
            radar_to_camera: RigidTransform::identity(),
            resolution: AngularResolution::from_degrees(1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn radius_examples() {
        let cfg = RadiusConfig::default();
        let r = neighborhood_radius(20.0, Some(0.0), &k1600(), 8, &cfg).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = neighborhood_radius(20.0, Some(40.0), &k1600(), 8, &cfg).unwrap();
        assert_eq!(r, 2.0);
        let r = neighborhood_radius(20.0, None, &k1600(), 8, &cfg).unwrap();
        assert_eq!(r, 2.0);
    }

    #[test]
    fn radius_errors() {
        let cfg = RadiusConfig {
            fixed_r: None,
            ..Default::default()
        };
        assert!(neighborhood_radius(20.0, None, &k1600(), 8, &cfg).is_err());
        assert!(neighborhood_radius(0.0, Some(1.0), &k1600(), 8, &cfg).is_err());
        assert!(neighborhood_radius(-4.0, Some(1.0), &k1600(), 8, &cfg).is_err());
    }

    #[test]
    fn radius_scaling_before_clamp() {
        let cfg = RadiusConfig {
            r_max: f64::INFINITY,
            ..Default::default()
        };
        let k = k1600();
        let base = neighborhood_radius(30.0, Some(-10.0), &k, 8, &cfg).unwrap();
        let louder = neighborhood_radius(30.0, Some(10.0), &k, 8, &cfg).unwrap();
        assert!((louder / base - 10.0).abs() < 1e-12);
        let farther = neighborhood_radius(60.0, Some(-10.0), &k, 8, &cfg).unwrap();
        assert!((farther * 2.0 - base).abs() < 1e-12);
    }

    #[test]
    fn target_examples() {
        let calib = calib_640();
        let cfg = RadiusConfig::default();
        let empty = build_depth_targets(&[], &calib, 8, &cfg).unwrap();
        assert!(empty.targets.is_empty());
        assert_eq!((empty.feature_width, empty.feature_height), (80, 60));

        let one = build_depth_targets(&[RadarPoint::new(0.0, 0.0, 10.0)], &calib, 8, &cfg).unwrap();
        assert_eq!(one.targets.len(), 1);
        let t = one.targets[0];
        assert_eq!((t.u, t.v, t.d_gt), (40, 30, 10.0));

        // same ray, different depths
        let near = RadarPoint::new(0.8, 0.0, 8.0);
        let far = RadarPoint::new(3.0, 0.0, 30.0);
        let two = build_depth_targets(&[near, far], &calib, 8, &cfg).unwrap();
        assert_eq!(two.targets.len(), 2);
        assert_eq!(
            (two.targets[0].u, two.targets[0].v),
            (two.targets[1].u, two.targets[1].v)
        );
        assert_eq!(two.targets[0].d_gt, 8.0);
        assert_eq!(two.targets[1].d_gt, 30.0);
    }

    #[test]
    fn invalid_points_are_dropped_and_counted() {
        let calib = calib_640();
        let cfg = RadiusConfig {
            fixed_r: None,
            ..Default::default()
        };
        let pts = [
            RadarPoint::new(0.0, 0.0, -5.0).with_rcs(0.0),
            RadarPoint::new(100.0, 0.0, 5.0).with_rcs(0.0),
            RadarPoint::new(0.0, 0.0, 5.0),
            RadarPoint::new(0.0, 0.0, 5.0).with_rcs(0.0),
        ];
        let set = build_depth_targets(&pts, &calib, 4, &cfg).unwrap();
        assert_eq!(set.targets.len(), 1);
        assert_eq!(
            set.dropped,
            DropCounts {
                behind_camera: 1,
                outside_image: 1,
                no_radius: 1
            }
        );
    }

    #[test]
    fn tensor_round_trip_and_validation() {
        let ts = vec![
            DepthTarget {
                u: 3,
                v: 7,
                d_gt: 12.5,
                radius: 1.25,
            },
            DepthTarget {
                u: 0,
                v: 0,
                d_gt: 40.0,
                radius: 0.0,
            },
        ];
        let t = targets_to_tensor(&ts);
        assert_eq!(t.shape(), &[2, 4]);
        assert_eq!(targets_from_tensor(&t).unwrap(), ts);
        let bad = Tensor::new(vec![1, 4], vec![1.5, 0.0, 1.0, 1.0]).unwrap();
        assert!(targets_from_tensor(&bad).is_err());
        assert!(targets_from_tensor(&Tensor::zeros(vec![2, 3])).is_err());
    }

    #[test]
    fn csv_with_optional_columns() {
        let full = "x,y,z,rcs_dbsm,doppler\n1,2,3,4.5,\n0,0,9,,-1.5\n";
        let pts = read_radar_csv_from(full.as_bytes()).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].rcs_dbsm, Some(4.5));
        assert_eq!(pts[0].doppler, None);
        assert_eq!(pts[1].rcs_dbsm, None);
        assert_eq!(pts[1].doppler, Some(-1.5));

        let xyz = "x,y,z\n1,2,3\n";
        assert_eq!(
            read_radar_csv_from(xyz.as_bytes()).unwrap()[0].rcs_dbsm,
            None
        );
        assert!(read_radar_csv_from("".as_bytes()).unwrap().is_empty());
        assert!(read_radar_csv_from("x,y,z\n1,foo,3\n".as_bytes()).is_err());
    }
}
