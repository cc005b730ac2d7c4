//! Image-to-BEV view transformation assisted by radar occupancy and image
//! depth distributions.
//!
//! Every voxel center is projected into the image feature map. The image
//! feature there is gated twice, once by the depth probability sampled at
//! the voxel's depth and once by the radar occupancy of the voxel. The two
//! gated volumes are stacked on channels, height is folded into channels,
//! and three 3x3 convolutions map the result to a `C x Y x X` BEV map.
//!
//! The voxel grid lives in an ego frame with x right, y forward and z up,
//! so `Z` indexes height. The radar frame is the same frame with its axes
//! relabelled to the camera convention (see [`ego_to_radar_axes`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthBinSpec;
use crate::error::{Error, Result};
use crate::geometry::{
    project_to_pixel, scale_intrinsics, Calibration, CameraIntrinsics, PixelProjection,
    RigidTransform,
};
use crate::tensor::{
    bilinear_sample_into, conv2d, sigmoid, softmax, trilinear_sample, Conv2dParams, Linear, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 0 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::invalid(format!(
                "axis needs count ≥ 1 and max > min (got [{min}, {max}] x {count})"
            )));
        }
        Ok(Self { min, max, count })
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * (self.max - self.min) / self.count as f64
    }
}

/// Voxel lattice in the ego frame (x right, y forward, z up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFile", into = "GridFile")]
pub struct VoxelGridSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub z: AxisSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    x: (f64, f64, usize),
    y: (f64, f64, usize),
    z: (f64, f64, usize),
}

impl TryFrom<GridFile> for VoxelGridSpec {
    type Error = Error;

    fn try_from(f: GridFile) -> Result<Self> {
        Ok(Self {
            x: AxisSpec::new(f.x.0, f.x.1, f.x.2)?,
            y: AxisSpec::new(f.y.0, f.y.1, f.y.2)?,
            z: AxisSpec::new(f.z.0, f.z.1, f.z.2)?,
        })
    }
}

impl From<VoxelGridSpec> for GridFile {
    fn from(s: VoxelGridSpec) -> Self {
        Self {
            x: (s.x.min, s.x.max, s.x.count),
            y: (s.y.min, s.y.max, s.y.count),
            z: (s.z.min, s.z.max, s.z.count),
        }
    }
}

impl VoxelGridSpec {
    /// `(Z, Y, X)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.z.count, self.y.count, self.x.count)
    }

    pub fn num_voxels(&self) -> usize {
        self.x.count * self.y.count * self.z.count
    }

    /// Center of voxel `(z, y, x)` as `[x, y, z]` in meters.
    pub fn center(&self, z: usize, y: usize, x: usize) -> [f64; 3] {
        [self.x.center(x), self.y.center(y), self.z.center(z)]
    }
}

/// Metric voxel centers, `3 x Z x Y x X` with coordinate order `(x, y, z)`.
pub fn voxel_centers(spec: &VoxelGridSpec) -> Tensor {
    let (nz, ny, nx) = spec.dims();
    Tensor::from_fn(vec![3, nz, ny, nx], |i| spec.center(i[1], i[2], i[3])[i[0]])
}

/// Radar occupancy probabilities, `Z x Y x X`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid(Tensor);

impl OccupancyGrid {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.rank() != 3 {
            return Err(Error::shape(format!(
                "occupancy must be Z x Y x X, got {:?}",
                t.shape()
            )));
        }
        if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("occupancy values must lie in [0, 1]"));
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Per-pixel depth probabilities of an image feature map at `stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDistributionMap {
    pub probs: Tensor,
    pub bins: DepthBinSpec,
    pub stride: usize,
}

impl DepthDistributionMap {
    pub fn new(probs: Tensor, bins: DepthBinSpec, stride: usize) -> Result<Self> {
        let (d, h, w) = probs.dims3()?;
        if d != bins.num_bins {
            return Err(Error::shape(format!(
                "depth map has {d} bins, the bin layout has {}",
                bins.num_bins
            )));
        }
        let plane = h * w;
        for p in 0..plane {
            let sum: f64 = (0..d).map(|l| probs.data()[l * plane + p]).sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(Error::invalid(format!(
                    "depth column at flat pixel {p} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            probs,
            bins,
            stride,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtParams {
    /// 1x1, `C -> Z`.
    pub occupancy_conv: Conv2dParams,
    /// 1x1, `C -> D`.
    pub depth_conv: Conv2dParams,
    /// `9 -> C`, or `25 -> C` with the extrinsics embedding.
    pub intrinsics_embedding: Linear,
    /// 3x3: `2C·Z -> C`, `C -> C`, `C -> C`.
    pub post_convs: [Conv2dParams; 3],
    pub use_extrinsics_embedding: bool,
}

impl VtParams {
    /// Checks every channel chain against `C`, `Z` and `D`.
    pub fn validate(&self, channels: usize, height_bins: usize, depth_bins: usize) -> Result<()> {
        let check = |what: &str, conv: &Conv2dParams, inp: usize, out: usize, k: usize| {
            if conv.in_channels() != inp
                || conv.out_channels() != out
                || conv.kernel_size() != (k, k)
            {
                return Err(Error::shape(format!(
                    "{what}: expected {k}x{k} conv {inp} -> {out}, got {}x{} conv {} -> {}",
                    conv.kernel_size().0,
                    conv.kernel_size().1,
                    conv.in_channels(),
                    conv.out_channels()
                )));
            }
            Ok(())
        };
        check(
            "occupancy conv",
            &self.occupancy_conv,
            channels,
            height_bins,
            1,
        )?;
        check("depth conv", &self.depth_conv, channels, depth_bins, 1)?;
        check(
            "post conv 0",
            &self.post_convs[0],
            2 * channels * height_bins,
            channels,
            3,
        )?;
        check("post conv 1", &self.post_convs[1], channels, channels, 3)?;
        check("post conv 2", &self.post_convs[2], channels, channels, 3)?;
        let emb_in = if self.use_extrinsics_embedding { 25 } else { 9 };
        if self.intrinsics_embedding.in_features() != emb_in
            || self.intrinsics_embedding.out_features() != channels
        {
            return Err(Error::shape(format!(
                "camera embedding: expected {emb_in} -> {channels}, got {} -> {}",
                self.intrinsics_embedding.in_features(),
                self.intrinsics_embedding.out_features()
            )));
        }
        Ok(())
    }
}

/// Occupancy probabilities `sigmoid(conv1x1(F))` from a radar BEV map.
pub fn occupancy_from_bev(
    radar_bev: &Tensor,
    occupancy_conv: &Conv2dParams,
) -> Result<OccupancyGrid> {
    let (c, _, _) = radar_bev.dims3()?;
    if occupancy_conv.kernel_size() != (1, 1) || occupancy_conv.in_channels() != c {
        return Err(Error::shape(format!(
            "occupancy conv must be 1x1 with {c} inputs"
        )));
    }
    Ok(OccupancyGrid(sigmoid(&conv2d(radar_bev, occupancy_conv)?)))
}

/// Embedding input: `K⁻¹` flattened row-major (9 values), followed by the
/// 4x4 extrinsic matrix row-major (16 values) when `extrinsics` is given.
pub fn camera_embedding_input(
    intrinsics: &CameraIntrinsics,
    extrinsics: Option<&RigidTransform>,
) -> Result<Vec<f64>> {
    let mut input: Vec<f64> = intrinsics.inverse()?.iter().flatten().copied().collect();
    if let Some(t) = extrinsics {
        input.extend_from_slice(&t.to_row_major());
    }
    Ok(input)
}

/// Depth distributions of an image feature map whose intrinsics have
/// already been rescaled to its stride.
pub fn depth_distribution(
    image_pv: &Tensor,
    intrinsics: &CameraIntrinsics,
    extrinsics: Option<&RigidTransform>,
    params: &VtParams,
    bins: &DepthBinSpec,
    stride: usize,
) -> Result<DepthDistributionMap> {
    let (c, _, _) = image_pv.dims3()?;
    let extrinsics = match (params.use_extrinsics_embedding, extrinsics) {
        (true, Some(t)) => Some(t),
        (true, None) => {
            return Err(Error::invalid(
                "extrinsics embedding is enabled but no extrinsics were given",
            ))
        }
        (false, _) => None,
    };
    let embedding = params
        .intrinsics_embedding
        .forward(&camera_embedding_input(intrinsics, extrinsics)?)?;
    if embedding.len() != c {
        return Err(Error::shape(format!(
            "camera embedding has {} channels, features have {c}",
            embedding.len()
        )));
    }
    let scaled = image_pv.scale_channels(&embedding)?;
    let logits = conv2d(&scaled, &params.depth_conv)?;
    if logits.shape()[0] != bins.num_bins {
        return Err(Error::shape(format!(
            "depth conv outputs {} bins, the bin layout has {}",
            logits.shape()[0],
            bins.num_bins
        )));
    }
    Ok(DepthDistributionMap {
        probs: softmax(&logits, 0)?,
        bins: *bins,
        stride,
    })
}

/// Rotation taking ego coordinates (x right, y forward, z up) to radar
/// coordinates (x right, y down, z forward).
pub fn ego_to_radar_axes() -> RigidTransform {
    RigidTransform::new(
        [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [0.0; 3],
    )
    .expect("axis permutation is a rotation")
}

/// Camera model for one image feature level: intrinsics at the feature
/// stride and the ego-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VtCamera {
    pub intrinsics: CameraIntrinsics,
    pub ego_to_camera: RigidTransform,
}

impl VtCamera {
    /// Ego frame centered on the radar: `ego_to_camera` is the calibration's
    /// radar-to-camera transform after [`ego_to_radar_axes`].
    pub fn from_calibration(calib: &Calibration, stride: usize) -> Result<Self> {
        Ok(Self {
            intrinsics: scale_intrinsics(&calib.intrinsics, stride as f64)?,
            ego_to_camera: compose(&calib.radar_to_camera, &ego_to_radar_axes())?,
        })
    }
}

/// `outer ∘ inner`.
fn compose(outer: &RigidTransform, inner: &RigidTransform) -> Result<RigidTransform> {
    let (ro, ri) = (outer.rotation(), inner.rotation());
    let mut r = [[0.0; 3]; 3];
    for (i, row) in r.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| ro[i][k] * ri[k][j]).sum();
        }
    }
    RigidTransform::new(r, outer.apply(*inner.translation()))
}

/// `(u, v, d)` of every voxel center in `(z, y, x)` row-major order; `None`
/// for voxels at or behind the camera plane.
pub fn project_voxels(grid: &VoxelGridSpec, camera: &VtCamera) -> Vec<Option<PixelProjection>> {
    let (nz, ny, nx) = grid.dims();
    (0..nz * ny * nx)
        .into_par_iter()
        .map(|i| {
            let (z, y, x) = (i / (ny * nx), (i / nx) % ny, i % nx);
            let cam = camera.ego_to_camera.apply(grid.center(z, y, x));
            project_to_pixel(cam, &camera.intrinsics).ok()
        })
        .collect()
}

/// The gated, height-folded volume fed to the post-VT convolutions,
/// `(2C·Z) x Y x X`. Channel `c·Z + z` holds `F ⊙ D` for `c < C` and
/// `F ⊙ O` for `c ≥ C`.
pub fn lift_volume(
    image_pv: &Tensor,
    depth: &DepthDistributionMap,
    occupancy: &OccupancyGrid,
    grid: &VoxelGridSpec,
    camera: &VtCamera,
) -> Result<Tensor> {
    let (c, h, w) = image_pv.dims3()?;
    let (_, dh, dw) = depth.probs.dims3()?;
    if (dh, dw) != (h, w) {
        return Err(Error::shape(format!(
            "depth map is {dh}x{dw} but image features are {h}x{w}"
        )));
    }
    let (nz, ny, nx) = grid.dims();
    if occupancy.tensor().shape() != [nz, ny, nx] {
        return Err(Error::shape(format!(
            "occupancy {:?} does not match grid {nz}x{ny}x{nx}",
            occupancy.tensor().shape()
        )));
    }
    let projections = project_voxels(grid, camera);
    let occ = occupancy.tensor().data();
    let n_vox = nz * ny * nx;

    // voxel-major scratch: [voxel][2C]
    let mut per_voxel = vec![0.0; n_vox * 2 * c];
    per_voxel
        .par_chunks_mut(2 * c)
        .enumerate()
        .for_each(|(i, out)| {
            let Some(p) = projections[i] else {
                return;
            };
            let (feat, gated) = out.split_at_mut(c);
            bilinear_sample_into(image_pv, p.u, p.v, feat);
            let prob = trilinear_sample(&depth.probs, p.u, p.v, depth.bins.continuous_bin(p.depth));
            let o = occ[i];
            for ch in 0..c {
                gated[ch] = feat[ch] * o;
                feat[ch] *= prob;
            }
        });

    let mut volume = vec![0.0; 2 * c * n_vox];
    volume
        .par_chunks_mut(n_vox)
        .enumerate()
        .for_each(|(ch, plane)| {
            for (i, v) in plane.iter_mut().enumerate() {
                *v = per_voxel[i * 2 * c + ch];
            }
        });
    Tensor::new(vec![2 * c * nz, ny, nx], volume)
}

/// Image features transformed to a `C x Y x X` BEV map.
pub fn sample_vt(
    image_pv: &Tensor,
    depth: &DepthDistributionMap,
    occupancy: &OccupancyGrid,
    grid: &VoxelGridSpec,
    camera: &VtCamera,
    params: &VtParams,
) -> Result<Tensor> {
    let (c, _, _) = image_pv.dims3()?;
    params.validate(c, grid.z.count, depth.bins.num_bins)?;
    let mut x = lift_volume(image_pv, depth, occupancy, grid, camera)?;
    for conv in &params.post_convs {
        x = conv2d(&x, conv)?;
    }
    Ok(x)
}
