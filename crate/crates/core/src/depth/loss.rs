use serde::{Deserialize, Serialize};

use super::{DepthBinSpec, DepthTarget};
use crate::error::{Error, Result};
use crate::tensor::{softmax, Tensor};

/// Probabilities below this are floored inside the cross-entropy log.
pub const PROB_FLOOR: f64 = 1e-12;

const NORMALIZATION_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    OneToOne,
    #[default]
    OneToMany,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub aggregation: Aggregation,
    pub strategy: Strategy,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            aggregation: Aggregation::Min,
            strategy: Strategy::OneToMany,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        Ok(())
    }
}

fn expected_depth_unchecked(dist: &[f64], spec: &DepthBinSpec) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(l, p)| p * spec.midpoint(l))
        .sum()
}

/// `Σ p_l · d̄_l` for a distribution over the bins of `spec`.
pub fn expected_depth(dist: &[f64], spec: &DepthBinSpec) -> Result<f64> {
    if dist.len() != spec.num_bins {
        return Err(Error::shape(format!(
            "distribution has {} bins, the bin layout has {}",
            dist.len(),
            spec.num_bins
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL || dist.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid(format!(
            "depth distribution is not normalized (sum = {sum})"
        )));
    }
    Ok(expected_depth_unchecked(dist, spec))
}

/// `λ₁·(−ln p_k) + λ₂·|E(d) − d_gt|` with `k` the bin nearest to `d_gt`.
///
/// Out-of-range `d_gt` is clamped to an edge bin for the classification
/// term only; the regression term uses the true value.
pub fn pixel_depth_loss(dist: &[f64], d_gt: f64, spec: &DepthBinSpec, cfg: &LossConfig) -> f64 {
    let k = spec.nearest_bin(d_gt);
    let ce = -dist[k].max(PROB_FLOOR).ln();
    let l1 = (expected_depth_unchecked(dist, spec) - d_gt).abs();
    cfg.lambda1 * ce + cfg.lambda2 * l1
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean of the per-target losses, 0 when there are no targets.
    pub total: f64,
    pub per_target: Vec<f64>,
    /// Pixel `(u, v)` chosen by the aggregation for each target.
    pub selected: Vec<(usize, usize)>,
}

/// Row-major pixels of the closed disk `du² + dv² ≤ r²` around `(u, v)`,
/// clipped to the map.
pub(crate) fn neighborhood(
    u: usize,
    v: usize,
    radius: f64,
    width: usize,
    height: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let reach = radius.max(0.0).floor() as isize;
    let r2 = radius * radius;
    let (u, v) = (u as isize, v as isize);
    (-reach..=reach).flat_map(move |dv| {
        (-reach..=reach).filter_map(move |du| {
            let (x, y) = (u + du, v + dv);
            let inside = x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
            ((du * du + dv * dv) as f64 <= r2 && inside).then_some((x as usize, y as usize))
        })
    })
}

struct DepthColumns<'a> {
    data: &'a [f64],
    bins: usize,
    height: usize,
    width: usize,
}

impl<'a> DepthColumns<'a> {
    fn new(map: &'a Tensor, spec: &DepthBinSpec) -> Result<Self> {
        let (bins, height, width) = map.dims3()?;
        if bins != spec.num_bins {
            return Err(Error::shape(format!(
                "depth map has {bins} bins, the bin layout has {}",
                spec.num_bins
            )));
        }
        Ok(Self {
            data: map.data(),
            bins,
            height,
            width,
        })
    }

    fn read(&self, u: usize, v: usize, buf: &mut [f64]) {
        let plane = self.height * self.width;
        let offset = v * self.width + u;
        for (l, b) in buf.iter_mut().enumerate() {
            *b = self.data[l * plane + offset];
        }
    }
}

fn check_target(t: &DepthTarget, width: usize, height: usize, i: usize) -> Result<()> {
    if t.u >= width || t.v >= height {
        return Err(Error::invalid(format!(
            "target {i} at ({}, {}) lies outside the {width}x{height} map",
            t.u, t.v
        )));
    }
    if !(t.radius >= 0.0) || !t.d_gt.is_finite() {
        return Err(Error::invalid(format!(
            "target {i} has invalid radius {} or depth {}",
            t.radius, t.d_gt
        )));
    }
    Ok(())
}

/// Aggregated pixel loss for each target over its neighborhood. Ties go to
/// the smallest row-major pixel index.
fn aggregate(
    cols: &DepthColumns,
    targets: &[DepthTarget],
    spec: &DepthBinSpec,
    cfg: &LossConfig,
    check_normalized: bool,
) -> Result<LossReport> {
    cfg.validate()?;
    let mut buf = vec![0.0; cols.bins];
    let mut per_target = Vec::with_capacity(targets.len());
    let mut selected = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        check_target(t, cols.width, cols.height, i)?;
        let radius = match cfg.strategy {
            Strategy::OneToOne => 0.0,
            Strategy::OneToMany => t.radius,
        };
        let mut best: Option<(f64, (usize, usize))> = None;
        for (x, y) in neighborhood(t.u, t.v, radius, cols.width, cols.height) {
            cols.read(x, y, &mut buf);
            if check_normalized {
                let sum: f64 = buf.iter().sum();
                if (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::invalid(format!(
                        "depth distribution at ({x}, {y}) sums to {sum}"
                    )));
                }
            }
            let loss = pixel_depth_loss(&buf, t.d_gt, spec, cfg);
            let better = match (best, cfg.aggregation) {
                (None, _) => true,
                (Some((b, _)), Aggregation::Min) => loss < b,
                (Some((b, _)), Aggregation::Max) => loss > b,
            };
            if better {
                best = Some((loss, (x, y)));
            }
        }
        let (loss, pixel) = best.expect("neighborhood always contains the target pixel");
        per_target.push(loss);
        selected.push(pixel);
    }
    let total = if per_target.is_empty() {
        0.0
    } else {
        per_target.iter().sum::<f64>() / per_target.len() as f64
    };
    Ok(LossReport {
        total,
        per_target,
        selected,
    })
}

/// Depth loss of a `D x H x W` map of per-pixel distributions against
/// sparse targets.
pub fn one_to_many_loss(
    depth_map: &Tensor,
    targets: &[DepthTarget],
    spec: &DepthBinSpec,
    cfg: &LossConfig,
) -> Result<LossReport> {
    let cols = DepthColumns::new(depth_map, spec)?;
    aggregate(&cols, targets, spec, cfg, true)
}

/// [`one_to_many_loss`] of `softmax(logits)` taken over the bin axis.
pub fn one_to_many_loss_from_logits(
    logits: &Tensor,
    targets: &[DepthTarget],
    spec: &DepthBinSpec,
    cfg: &LossConfig,
) -> Result<LossReport> {
    let probs = softmax(logits, 0)?;
    let cols = DepthColumns::new(&probs, spec)?;
    aggregate(&cols, targets, spec, cfg, false)
}

/// Gradient of the total loss with respect to the pre-softmax logits
/// (`D x H x W`). Only the pixel selected for each target receives
/// gradient; the sign of `|E − d_gt|` is taken as 0 at 0.
pub fn one_to_many_loss_grad(
    logits: &Tensor,
    targets: &[DepthTarget],
    spec: &DepthBinSpec,
    cfg: &LossConfig,
) -> Result<Tensor> {
    let probs = softmax(logits, 0)?;
    let cols = DepthColumns::new(&probs, spec)?;
    let report = aggregate(&cols, targets, spec, cfg, false)?;
    let (bins, height, width) = (cols.bins, cols.height, cols.width);
    let mut grad = Tensor::zeros(vec![bins, height, width]);
    if targets.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / targets.len() as f64;
    let plane = height * width;
    let mut p = vec![0.0; bins];
    let g = grad.data_mut();
    for (t, &(x, y)) in targets.iter().zip(&report.selected) {
        cols.read(x, y, &mut p);
        let k = spec.nearest_bin(t.d_gt);
        let expected = expected_depth_unchecked(&p, spec);
        let residual = expected - t.d_gt;
        let sign = if residual > 0.0 {
            1.0
        } else if residual < 0.0 {
            -1.0
        } else {
            0.0
        };
        let ce_active = p[k] >= PROB_FLOOR;
        let offset = y * width + x;
        for l in 0..bins {
            let mut d = 0.0;
            if ce_active {
                d += cfg.lambda1 * (p[l] - if l == k { 1.0 } else { 0.0 });
            }
            d += cfg.lambda2 * sign * p[l] * (spec.midpoint(l) - expected);
            g[l * plane + offset] += scale * d;
        }
    }
    Ok(grad)
}
