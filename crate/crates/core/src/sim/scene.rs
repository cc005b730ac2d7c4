//! Random scenes of frontal rectangles and their dense depth maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Calibration, Vec3};

/// Area that maps to 0 dBsm.
pub const K_S_SIM: f64 = 1.0;

/// A camera-facing rectangle. `center` is in the camera frame and its `z`
/// is the object's depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub center: Vec3,
    pub width: f64,
    pub height: f64,
}

impl SceneObject {
    pub fn new(center: Vec3, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::invalid(format!(
                "object extent must be positive, got {width} x {height}"
            )));
        }
        if !(center[2] > 0.0) {
            return Err(Error::invalid(format!(
                "object depth must be positive, got {}",
                center[2]
            )));
        }
        Ok(Self {
            center,
            width,
            height,
        })
    }

    /// Frontal area `S` in m².
    pub fn size(&self) -> f64 {
        self.width * self.height
    }

    pub fn true_depth(&self) -> f64 {
        self.center[2]
    }

    pub fn rcs_dbsm(&self) -> f64 {
        10.0 * (self.size() / K_S_SIM).log10()
    }

    /// True when `(x, y)` at this object's depth lies on the rectangle.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= 0.5 * self.width
            && (y - self.center[1]).abs() <= 0.5 * self.height
    }

    /// True when the ray from the camera center through `p` crosses this
    /// object strictly in front of `p`.
    pub fn occludes(&self, p: Vec3) -> bool {
        if !(self.true_depth() < p[2]) {
            return false;
        }
        let t = self.true_depth() / p[2];
        self.contains_xy(p[0] * t, p[1] * t)
    }
}

/// Sampling ranges for random scenes. Every `[lo, hi]` pair is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub n_objects: usize,
    pub depth: [f64; 2],
    /// Azimuth of the object center, degrees.
    pub azimuth_deg: [f64; 2],
    /// Camera-frame `y` of the object center, meters (y points down).
    pub center_y: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_objects: 6,
            depth: [5.0, 40.0],
            azimuth_deg: [-20.0, 20.0],
            center_y: [-0.5, 1.0],
            width: [0.5, 4.0],
            height: [0.5, 2.5],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("depth", self.depth),
            ("azimuth_deg", self.azimuth_deg),
            ("center_y", self.center_y),
            ("width", self.width),
            ("height", self.height),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        if !(self.depth[0] > 0.0 && self.width[0] > 0.0 && self.height[0] > 0.0) {
            return Err(Error::invalid(
                "depth, width and height ranges must be positive",
            ));
        }
        if self.azimuth_deg[0].abs() >= 90.0 || self.azimuth_deg[1].abs() >= 90.0 {
            return Err(Error::invalid(
                "azimuth range must lie inside (-90, 90) degrees",
            ));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Dense per-pixel true depth of a feature map at `stride`. Feature pixel
/// `(i, j)` covers full-resolution `u ∈ [j·s, (j+1)·s)` and is assigned the
/// nearest object containing its block center `((j+0.5)·s, (i+0.5)·s)`.
/// Background pixels hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn covered(&self) -> usize {
        self.data.iter().filter(|d| d.is_finite()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Depth map at `stride` for the camera in `calib`.
    pub fn render(&self, calib: &Calibration, stride: usize) -> Result<DepthMap> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        let k = &calib.intrinsics;
        let width = calib.image_width.div_ceil(stride);
        let height = calib.image_height.div_ceil(stride);
        let mut data = vec![f64::INFINITY; width * height];
        for obj in &self.objects {
            let z = obj.true_depth();
            let u_lo = k.fx * (obj.center[0] - 0.5 * obj.width) / z + k.cx;
            let u_hi = k.fx * (obj.center[0] + 0.5 * obj.width) / z + k.cx;
            let v_lo = k.fy * (obj.center[1] - 0.5 * obj.height) / z + k.cy;
            let v_hi = k.fy * (obj.center[1] + 0.5 * obj.height) / z + k.cy;
            for i in 0..height {
                let vc = (i as f64 + 0.5) * stride as f64;
                if vc < v_lo || vc >= v_hi {
                    continue;
                }
                for j in 0..width {
                    let uc = (j as f64 + 0.5) * stride as f64;
                    if uc >= u_lo && uc < u_hi {
                        let cell = &mut data[i * width + j];
                        *cell = cell.min(z);
                    }
                }
            }
        }
        Ok(DepthMap {
            width,
            height,
            stride,
            data,
        })
    }
}

/// Deterministic random scene for `seed`.
pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = (0..spec.n_objects)
        .map(|_| {
            let z = draw(&mut rng, spec.depth);
            let theta = draw(&mut rng, spec.azimuth_deg).to_radians();
            let y = draw(&mut rng, spec.center_y);
            let w = draw(&mut rng, spec.width);
            let h = draw(&mut rng, spec.height);
            SceneObject::new([z * theta.tan(), y, z], w, h)
        })
        .collect::<Result<_>>()?;
    Ok(Scene { objects })
}
