//! JSON manifests naming LXLT parameter and feature files.
//!
//! Relative paths inside a manifest are resolved against the manifest's
//! own directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::depth::DepthBinSpec;
use crate::error::{Error, Result};
use crate::fusion::{ConcatFusionParams, CsaFusionParams};
use crate::tensor::{read_lxlt, Conv2dParams, Linear, Mlp, Tensor};
use crate::view_transform::{VoxelGridSpec, VtParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvFile {
    pub weights: PathBuf,
    pub bias: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFile {
    pub weight: PathBuf,
    pub bias: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtParamsFile {
    pub occupancy_conv: ConvFile,
    pub depth_conv: ConvFile,
    pub intrinsics_embedding: LinearFile,
    pub post_convs: [ConvFile; 3],
    #[serde(default)]
    pub use_extrinsics_embedding: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtManifest {
    /// `C x H x W` image features at `stride`.
    pub image_features: PathBuf,
    /// `C x Y x X` radar BEV features.
    pub radar_bev: PathBuf,
    pub calibration: PathBuf,
    pub grid: VoxelGridSpec,
    pub bins: DepthBinSpec,
    pub stride: usize,
    pub params: VtParamsFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcatParamsFile {
    pub conv1: ConvFile,
    pub conv2: ConvFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsaParamsFile {
    pub input_conv: ConvFile,
    pub radar_mlp: [LinearFile; 2],
    pub image_mlp: [LinearFile; 2],
    pub mid_conv: ConvFile,
    pub radar_spatial: ConvFile,
    pub image_spatial: ConvFile,
    pub output_conv: ConvFile,
}

pub struct Loader {
    base: PathBuf,
}

impl Loader {
    pub fn for_manifest(manifest: &Path) -> Self {
        Self {
            base: manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn tensor(&self, p: &Path) -> Result<Tensor> {
        load_tensor(&self.resolve(p))
    }

    pub fn conv(&self, f: &ConvFile) -> Result<Conv2dParams> {
        Conv2dParams::new(self.tensor(&f.weights)?, self.tensor(&f.bias)?)
    }

    pub fn linear(&self, f: &LinearFile) -> Result<Linear> {
        Linear::new(self.tensor(&f.weight)?, self.tensor(&f.bias)?)
    }

    pub fn mlp(&self, f: &[LinearFile; 2]) -> Result<Mlp> {
        Mlp::new(vec![self.linear(&f[0])?, self.linear(&f[1])?])
    }

    pub fn vt_params(&self, f: &VtParamsFile) -> Result<VtParams> {
        Ok(VtParams {
            occupancy_conv: self.conv(&f.occupancy_conv)?,
            depth_conv: self.conv(&f.depth_conv)?,
            intrinsics_embedding: self.linear(&f.intrinsics_embedding)?,
            post_convs: [
                self.conv(&f.post_convs[0])?,
                self.conv(&f.post_convs[1])?,
                self.conv(&f.post_convs[2])?,
            ],
            use_extrinsics_embedding: f.use_extrinsics_embedding,
        })
    }

    pub fn concat_params(&self, f: &ConcatParamsFile) -> Result<ConcatFusionParams> {
        Ok(ConcatFusionParams {
            conv1: self.conv(&f.conv1)?,
            conv2: self.conv(&f.conv2)?,
        })
    }

    pub fn csa_params(&self, f: &CsaParamsFile) -> Result<CsaFusionParams> {
        Ok(CsaFusionParams {
            input_conv: self.conv(&f.input_conv)?,
            radar_mlp: self.mlp(&f.radar_mlp)?,
            image_mlp: self.mlp(&f.image_mlp)?,
            mid_conv: self.conv(&f.mid_conv)?,
            radar_spatial: self.conv(&f.radar_spatial)?,
            image_spatial: self.conv(&f.image_spatial)?,
            output_conv: self.conv(&f.output_conv)?,
        })
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    read_lxlt(path).map_err(|e| with_path(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(path, e.into()))
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| with_path(path, e.into()))
}
