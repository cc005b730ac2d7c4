//! Radar returns sampled on scene objects with angular quantization noise
//! and Gaussian range noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::depth::RadarPoint;
use crate::error::{Error, Result};
use crate::geometry::{cartesian_to_spherical, spherical_to_cartesian, Calibration, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarNoiseModel {
    /// Azimuth resolution, radians.
    pub delta_theta: f64,
    /// Elevation resolution, radians.
    pub delta_phi: f64,
    /// Standard deviation of the range noise, meters.
    pub range_sigma: f64,
    /// Inclusive `[min, max]` number of samples per object.
    pub points_per_object: [usize; 2],
    pub seed: u64,
}

impl RadarNoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_theta >= 0.0 && self.delta_phi >= 0.0) {
            return Err(Error::invalid("angular resolutions must be ≥ 0"));
        }
        if !(self.range_sigma >= 0.0) {
            return Err(Error::invalid("range_sigma must be ≥ 0"));
        }
        if self.points_per_object[0] > self.points_per_object[1] {
            return Err(Error::invalid(
                "points_per_object must be [min, max] with min ≤ max",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedPoint {
    /// Noisy return in the radar frame, carrying the object's RCS.
    pub point: RadarPoint,
    /// Noise-free surface sample in the radar frame.
    pub true_position: Vec3,
    pub object: usize,
}

fn symmetric(rng: &mut ChaCha8Rng, width: f64) -> f64 {
    if width > 0.0 {
        rng.random_range(-0.5 * width..=0.5 * width)
    } else {
        0.0
    }
}

/// Samples visible surface points of every object and perturbs them in the
/// radar's spherical coordinates. Samples hidden behind a nearer object are
/// discarded.
pub fn simulate_radar(
    scene: &Scene,
    calib: &Calibration,
    model: &RadarNoiseModel,
) -> Result<Vec<SimulatedPoint>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(1);
    let range_noise = Normal::new(0.0, model.range_sigma)
        .map_err(|e| Error::invalid(format!("range noise: {e}")))?;
    let camera_to_radar = calib.radar_to_camera.inverse();
    let mut out = Vec::new();
    for (idx, obj) in scene.objects.iter().enumerate() {
        let [lo, hi] = model.points_per_object;
        let n = rng.random_range(lo..=hi);
        for _ in 0..n {
            let surface = [
                obj.center[0] + symmetric(&mut rng, obj.width),
                obj.center[1] + symmetric(&mut rng, obj.height),
                obj.center[2],
            ];
            let d_theta = symmetric(&mut rng, model.delta_theta);
            let d_phi = symmetric(&mut rng, model.delta_phi);
            let d_range = range_noise.sample(&mut rng);
            if scene.objects.iter().any(|o| o.occludes(surface)) {
                continue;
            }
            let truth = camera_to_radar.apply(surface);
            let mut s = cartesian_to_spherical(truth);
            s.azimuth += d_theta;
            s.elevation += d_phi;
            s.range = (s.range + d_range).max(1e-9);
            let [x, y, z] = spherical_to_cartesian(&s);
            out.push(SimulatedPoint {
                point: RadarPoint::new(x, y, z).with_rcs(obj.rcs_dbsm()),
                true_position: truth,
                object: idx,
            });
        }
    }
    Ok(out)
}

/// Horizontal distance of `noisy` from the true point's azimuth ray.
pub fn lateral_error(true_position: Vec3, noisy: Vec3) -> f64 {
    let theta = true_position[0].atan2(true_position[2]);
    (noisy[0] * theta.cos() - noisy[2] * theta.sin()).abs()
}

/// Largest lateral error the model can produce at `true_position`: the
/// tangential quantization error `ρ·cos φ·Δθ/2` plus `3σ·Δθ` of range-noise
/// spillover.
pub fn lateral_error_bound(true_position: Vec3, model: &RadarNoiseModel) -> f64 {
    let s = cartesian_to_spherical(true_position);
    s.range * s.elevation.cos() * model.delta_theta / 2.0
        + 3.0 * model.range_sigma * model.delta_theta
}
