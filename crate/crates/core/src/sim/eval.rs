//! Scoring radar-derived depth targets against dense scene depth.

use serde::{Deserialize, Serialize};

use super::scene::DepthMap;
use crate::depth::{
    build_depth_targets, neighborhood, Aggregation, DepthBinSpec, RadarPoint, RadiusConfig,
};
use crate::error::{Error, Result};
use crate::geometry::Calibration;

/// Which pixels a target may claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimStrategy {
    /// Only the projected pixel.
    OneToOne,
    /// Disk of radius `fixed_r` for every point (RCS ignored).
    Fixed,
    /// Disk of RCS-guided radius.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisionMetrics {
    pub hit_rate: f64,
    pub depth_mae: f64,
    pub n_targets: usize,
}

/// Builds targets from `points` and, per target, picks the neighborhood
/// pixel whose true depth is closest to `d_gt` (`Min`) or farthest from it
/// (`Max`). Ties go to the first pixel in row-major order. Background depth
/// is read as `d_max`. A target is a hit when the chosen pixel's depth is
/// within half a bin of `d_gt`.
///
/// With no targets the metrics are all zero.
pub fn evaluate_supervision(
    gt: &DepthMap,
    points: &[RadarPoint],
    calib: &Calibration,
    spec: &DepthBinSpec,
    radius: &RadiusConfig,
    strategy: SimStrategy,
    aggregation: Aggregation,
) -> Result<SupervisionMetrics> {
    let stripped: Vec<RadarPoint>;
    let points = if strategy == SimStrategy::Fixed {
        if radius.fixed_r.is_none() {
            return Err(Error::invalid("the fixed strategy needs fixed_r"));
        }
        stripped = points
            .iter()
            .map(|p| RadarPoint {
                rcs_dbsm: None,
                ..*p
            })
            .collect();
        &stripped
    } else {
        points
    };
    let set = build_depth_targets(points, calib, gt.stride, radius)?;
    if (set.feature_width, set.feature_height) != (gt.width, gt.height) {
        return Err(Error::shape(format!(
            "depth map is {}x{} but targets live on {}x{}",
            gt.width, gt.height, set.feature_width, set.feature_height
        )));
    }
    let half_bin = 0.5 * spec.bin_width();
    let mut hits = 0usize;
    let mut abs_err = 0.0;
    for t in &set.targets {
        let r = match strategy {
            SimStrategy::OneToOne => 0.0,
            _ => t.radius,
        };
        let mut best: Option<f64> = None;
        for (x, y) in neighborhood(t.u, t.v, r, gt.width, gt.height) {
            let err = (gt.at(x, y).min(spec.d_max) - t.d_gt).abs();
            let better = match (best, aggregation) {
                (None, _) => true,
                (Some(b), Aggregation::Min) => err < b,
                (Some(b), Aggregation::Max) => err > b,
            };
            if better {
                best = Some(err);
            }
        }
        let err = best.expect("a target's own pixel is always in its neighborhood");
        if err <= half_bin {
            hits += 1;
        }
        abs_err += err;
    }
    let n = set.targets.len();
    Ok(if n == 0 {
        SupervisionMetrics {
            hit_rate: 0.0,
            depth_mae: 0.0,
            n_targets: 0,
        }
    } else {
        SupervisionMetrics {
            hit_rate: hits as f64 / n as f64,
            depth_mae: abs_err / n as f64,
            n_targets: n,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AngularResolution, CameraIntrinsics, RigidTransform};
    use crate::sim::radar::{simulate_radar, RadarNoiseModel};
    use crate::sim::scene::{Scene, SceneObject};

    fn calib() -> Calibration {
        Calibration {
            intrinsics: CameraIntrinsics::new(800.0, 800.0, 320.0, 192.0).unwrap(),
            image_width: 640,
            image_height: 384,
            radar_to_camera: RigidTransform::identity(),
            resolution: AngularResolution::from_degrees(1.0, 1.0).unwrap(),
        }
    }

    fn spec() -> DepthBinSpec {
        DepthBinSpec::new(1.0, 61.0, 60).unwrap()
    }

    fn run(
        scene: &Scene,
        model: &RadarNoiseModel,
        radius: &RadiusConfig,
        s: SimStrategy,
    ) -> SupervisionMetrics {
        let c = calib();
        let gt = scene.render(&c, 4).unwrap();
        let pts: Vec<RadarPoint> = simulate_radar(scene, &c, model)
            .unwrap()
            .into_iter()
            .map(|p| p.point)
            .collect();
        evaluate_supervision(&gt, &pts, &c, &spec(), radius, s, Aggregation::Min).unwrap()
    }

    #[test]
    fn noiseless_block_aligned_object_is_all_hits() {
        // At depth 20 with fx = 800, 0.8 m spans 32 px = 8 blocks of 4 px,
        // and the center offsets put the edges on block boundaries.
        let obj = SceneObject::new([0.4, 0.4, 20.0], 1.6, 1.6).unwrap();
        let scene = Scene { objects: vec![obj] };
        let model = RadarNoiseModel {
            delta_theta: 0.0,
            delta_phi: 0.0,
            range_sigma: 0.0,
            points_per_object: [50, 50],
            seed: 2,
        };
        for s in [
            SimStrategy::OneToOne,
            SimStrategy::Fixed,
            SimStrategy::Dynamic,
        ] {
            let m = run(&scene, &model, &RadiusConfig::default(), s);
            assert_eq!(m.n_targets, 50);
            assert_eq!(m.hit_rate, 1.0, "{s:?}");
            assert!(m.depth_mae < 1e-9);
        }
    }

    #[test]
    fn zero_r_max_collapses_to_one_to_one() {
        let scene = Scene {
            objects: vec![
                SceneObject::new([0.3, 0.1, 9.0], 1.1, 0.7).unwrap(),
                SceneObject::new([-1.0, 0.0, 14.0], 2.5, 1.9).unwrap(),
            ],
        };
        let model = RadarNoiseModel {
            delta_theta: 1f64.to_radians(),
            delta_phi: 1f64.to_radians(),
            range_sigma: 0.1,
            points_per_object: [30, 30],
            seed: 5,
        };
        let zero = RadiusConfig {
            r_max: 0.0,
            ..Default::default()
        };
        let base = run(&scene, &model, &zero, SimStrategy::OneToOne);
        assert_eq!(run(&scene, &model, &zero, SimStrategy::Dynamic), base);
        assert_eq!(run(&scene, &model, &zero, SimStrategy::Fixed), base);
    }

    #[test]
    fn no_points_no_targets() {
        let c = calib();
        let gt = Scene { objects: vec![] }.render(&c, 4).unwrap();
        let m = evaluate_supervision(
            &gt,
            &[],
            &c,
            &spec(),
            &RadiusConfig::default(),
            SimStrategy::Dynamic,
            Aggregation::Min,
        )
        .unwrap();
        assert_eq!(m.n_targets, 0);
    }
}
