//! Radar/image BEV fusion: a concatenation baseline and a two-stage
//! channel + spatial attention fusion.
//!
//! Attention follows the CBAM form. Channel weights come from a shared
//! per-modality MLP applied to global average and max pools of the mixed
//! feature. Spatial weights come from a per-modality 7x7 convolution over
//! the channel max and channel mean of the mixed feature.

use crate::error::{Error, Result};
use crate::tensor::{
    channel_reduce, conv2d, global_pool, sigmoid_scalar, ChannelReduce, Conv2dParams, Mlp, Pool,
    Tensor,
};

/// Two stacked 3x3 convolutions, `2C -> C -> C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatFusionParams {
    pub conv1: Conv2dParams,
    pub conv2: Conv2dParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsaFusionParams {
    /// 3x3, `2C -> C`.
    pub input_conv: Conv2dParams,
    /// `C -> max(1, C/3) -> C`.
    pub radar_mlp: Mlp,
    pub image_mlp: Mlp,
    /// 3x3, `2C -> C`.
    pub mid_conv: Conv2dParams,
    /// 7x7, `2 -> 1`.
    pub radar_spatial: Conv2dParams,
    pub image_spatial: Conv2dParams,
    /// 3x3, `2C -> C`.
    pub output_conv: Conv2dParams,
}

pub fn bottleneck_width(channels: usize) -> usize {
    (channels / 3).max(1)
}

fn check_conv(what: &str, conv: &Conv2dParams, inp: usize, out: usize, k: usize) -> Result<()> {
    if conv.in_channels() != inp || conv.out_channels() != out || conv.kernel_size() != (k, k) {
        return Err(Error::shape(format!(
            "{what}: expected {k}x{k} conv {inp} -> {out}, got {}x{} conv {} -> {}",
            conv.kernel_size().0,
            conv.kernel_size().1,
            conv.in_channels(),
            conv.out_channels()
        )));
    }
    Ok(())
}

fn check_mlp(what: &str, mlp: &Mlp, channels: usize) -> Result<()> {
    let hidden = bottleneck_width(channels);
    let layers = mlp.layers();
    if layers.len() != 2
        || layers[0].in_features() != channels
        || layers[0].out_features() != hidden
        || layers[1].out_features() != channels
    {
        return Err(Error::shape(format!(
            "{what}: expected MLP {channels} -> {hidden} -> {channels}"
        )));
    }
    Ok(())
}

impl ConcatFusionParams {
    pub fn validate(&self, channels: usize) -> Result<()> {
        check_conv("conv1", &self.conv1, 2 * channels, channels, 3)?;
        check_conv("conv2", &self.conv2, channels, channels, 3)
    }
}

impl CsaFusionParams {
    pub fn validate(&self, channels: usize) -> Result<()> {
        check_conv("input conv", &self.input_conv, 2 * channels, channels, 3)?;
        check_mlp("radar MLP", &self.radar_mlp, channels)?;
        check_mlp("image MLP", &self.image_mlp, channels)?;
        check_conv("mid conv", &self.mid_conv, 2 * channels, channels, 3)?;
        check_conv("radar spatial conv", &self.radar_spatial, 2, 1, 7)?;
        check_conv("image spatial conv", &self.image_spatial, 2, 1, 7)?;
        check_conv("output conv", &self.output_conv, 2 * channels, channels, 3)
    }

    /// Same parameters with the radar and image sets exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            radar_mlp: self.image_mlp.clone(),
            image_mlp: self.radar_mlp.clone(),
            radar_spatial: self.image_spatial.clone(),
            image_spatial: self.radar_spatial.clone(),
            ..self.clone()
        }
    }
}

fn check_pair(radar: &Tensor, image: &Tensor) -> Result<usize> {
    let (c, _, _) = radar.dims3()?;
    if radar.shape() != image.shape() {
        return Err(Error::shape(format!(
            "radar BEV {:?} and image BEV {:?} differ",
            radar.shape(),
            image.shape()
        )));
    }
    Ok(c)
}

pub fn concat_fusion(
    radar: &Tensor,
    image: &Tensor,
    params: &ConcatFusionParams,
) -> Result<Tensor> {
    let c = check_pair(radar, image)?;
    params.validate(c)?;
    let x = conv2d(&Tensor::concat_channels(&[radar, image])?, &params.conv1)?;
    conv2d(&x, &params.conv2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttention {
    pub mid_radar: Tensor,
    pub mid_image: Tensor,
    pub w_radar: Vec<f64>,
    pub w_image: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention {
    pub out_radar: Tensor,
    pub out_image: Tensor,
    /// `1 x Y x X`.
    pub w_radar: Tensor,
    pub w_image: Tensor,
}

/// Sigmoid kept inside the open unit interval. In f64 the logistic rounds
/// to exactly 1 above ~36.7 and underflows to 0 below ~-745; those cases
/// move by one ulp to the nearest value strictly inside.
pub fn gate(x: f64) -> f64 {
    sigmoid_scalar(x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn channel_weights(mlp: &Mlp, avg: &[f64], max: &[f64]) -> Result<Vec<f64>> {
    let a = mlp.forward(avg)?;
    let m = mlp.forward(max)?;
    Ok(a.iter().zip(&m).map(|(a, m)| gate(a + m)).collect())
}

pub fn channel_attention(
    radar: &Tensor,
    image: &Tensor,
    params: &CsaFusionParams,
) -> Result<ChannelAttention> {
    let c = check_pair(radar, image)?;
    params.validate(c)?;
    let mixed = conv2d(
        &Tensor::concat_channels(&[radar, image])?,
        &params.input_conv,
    )?;
    let avg = global_pool(&mixed, Pool::Avg)?;
    let max = global_pool(&mixed, Pool::Max)?;
    let w_radar = channel_weights(&params.radar_mlp, &avg, &max)?;
    let w_image = channel_weights(&params.image_mlp, &avg, &max)?;
    Ok(ChannelAttention {
        mid_radar: radar.scale_channels(&w_radar)?,
        mid_image: image.scale_channels(&w_image)?,
        w_radar,
        w_image,
    })
}

pub fn spatial_attention(
    mid_radar: &Tensor,
    mid_image: &Tensor,
    params: &CsaFusionParams,
) -> Result<SpatialAttention> {
    let c = check_pair(mid_radar, mid_image)?;
    params.validate(c)?;
    let mixed = conv2d(
        &Tensor::concat_channels(&[mid_radar, mid_image])?,
        &params.mid_conv,
    )?;
    let pooled = Tensor::concat_channels(&[
        &channel_reduce(&mixed, ChannelReduce::Max)?,
        &channel_reduce(&mixed, ChannelReduce::Mean)?,
    ])?;
    let w_radar = conv2d(&pooled, &params.radar_spatial)?.map(gate);
    let w_image = conv2d(&pooled, &params.image_spatial)?.map(gate);
    Ok(SpatialAttention {
        out_radar: mid_radar.scale_spatial(&w_radar)?,
        out_image: mid_image.scale_spatial(&w_image)?,
        w_radar,
        w_image,
    })
}

/// Fused map together with every intermediate gate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsaFusionOutput {
    pub fused: Tensor,
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

pub fn csa_fusion_detailed(
    radar: &Tensor,
    image: &Tensor,
    params: &CsaFusionParams,
) -> Result<CsaFusionOutput> {
    let channel = channel_attention(radar, image, params)?;
    let spatial = spatial_attention(&channel.mid_radar, &channel.mid_image, params)?;
    let fused = conv2d(
        &Tensor::concat_channels(&[&spatial.out_radar, &spatial.out_image])?,
        &params.output_conv,
    )?;
    Ok(CsaFusionOutput {
        fused,
        channel,
        spatial,
    })
}

pub fn csa_fusion(radar: &Tensor, image: &Tensor, params: &CsaFusionParams) -> Result<Tensor> {
    Ok(csa_fusion_detailed(radar, image, params)?.fused)
}
