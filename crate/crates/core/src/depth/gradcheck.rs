//! Central finite-difference validation of [`one_to_many_loss_grad`].
//!
//! Random instances are drawn away from the loss's kinks: every target's
//! aggregated pixel must beat the runner-up by a margin, and its expected
//! depth must not sit on `d_gt`. Instances that violate this are redrawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::neighborhood;
use super::{
    expected_depth, one_to_many_loss_from_logits, one_to_many_loss_grad, pixel_depth_loss,
    Aggregation, DepthBinSpec, DepthTarget, LossConfig, Strategy,
};
use crate::error::Result;
use crate::tensor::{softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub max_bins: usize,
    pub max_size: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            max_bins: 16,
            max_size: 12,
            step: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub redrawn: usize,
    pub max_rel_error: f64,
}

/// A random loss instance: logits, targets, bins and loss settings.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub logits: Tensor,
    pub targets: Vec<DepthTarget>,
    pub spec: DepthBinSpec,
    pub cfg: LossConfig,
}

const KINK_MARGIN: f64 = 1e-3;

/// Elementwise relative error `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn random_instance<R: Rng>(rng: &mut R, max_bins: usize, max_size: usize) -> GradInstance {
    let bins = rng.random_range(2..=max_bins.max(2));
    let height = rng.random_range(1..=max_size.max(1));
    let width = rng.random_range(1..=max_size.max(1));
    let d_min = rng.random_range(0.0..5.0);
    let d_max = d_min + rng.random_range(5.0..60.0);
    let spec = DepthBinSpec::new(d_min, d_max, bins).expect("valid random bins");
    let logits = Tensor::from_fn(vec![bins, height, width], |_| rng.random_range(-3.0..3.0));
    let n_targets = rng.random_range(1..=4);
    let targets = (0..n_targets)
        .map(|_| DepthTarget {
            u: rng.random_range(0..width),
            v: rng.random_range(0..height),
            d_gt: rng.random_range(d_min - 2.0..d_max + 2.0),
            radius: rng.random_range(0.0..2.5),
        })
        .collect();
    let cfg = LossConfig {
        lambda1: rng.random_range(0.05..1.0),
        lambda2: rng.random_range(0.05..1.0),
        aggregation: if rng.random_bool(0.7) {
            Aggregation::Min
        } else {
            Aggregation::Max
        },
        strategy: if rng.random_bool(0.7) {
            Strategy::OneToMany
        } else {
            Strategy::OneToOne
        },
    };
    GradInstance {
        logits,
        targets,
        spec,
        cfg,
    }
}

/// True when the loss is smooth in a neighborhood of the instance.
pub fn is_smooth(inst: &GradInstance) -> Result<bool> {
    let probs = softmax(&inst.logits, 0)?;
    let (bins, height, width) = probs.dims3()?;
    let mut dist = vec![0.0; bins];
    let plane = height * width;
    for t in &inst.targets {
        let radius = match inst.cfg.strategy {
            Strategy::OneToOne => 0.0,
            Strategy::OneToMany => t.radius,
        };
        let mut losses = Vec::new();
        for (x, y) in neighborhood(t.u, t.v, radius, width, height) {
            for (l, d) in dist.iter_mut().enumerate() {
                *d = probs.data()[l * plane + y * width + x];
            }
            let e = expected_depth(&dist, &inst.spec)?;
            losses.push((pixel_depth_loss(&dist, t.d_gt, &inst.spec, &inst.cfg), e));
        }
        losses.sort_by(|a, b| a.0.total_cmp(&b.0));
        let chosen = match inst.cfg.aggregation {
            Aggregation::Min => 0,
            Aggregation::Max => losses.len() - 1,
        };
        if (losses[chosen].1 - t.d_gt).abs() < KINK_MARGIN {
            return Ok(false);
        }
        if losses.len() > 1 {
            let runner_up = match inst.cfg.aggregation {
                Aggregation::Min => losses[1].0 - losses[0].0,
                Aggregation::Max => losses[chosen].0 - losses[chosen - 1].0,
            };
            if runner_up < KINK_MARGIN {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Largest elementwise relative error between the analytic gradient and
/// central differences of the loss with step `h`.
pub fn check_instance(inst: &GradInstance, h: f64) -> Result<f64> {
    let analytic = one_to_many_loss_grad(&inst.logits, &inst.targets, &inst.spec, &inst.cfg)?;
    let mut worst: f64 = 0.0;
    let mut probe = inst.logits.clone();
    for i in 0..probe.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus =
            one_to_many_loss_from_logits(&probe, &inst.targets, &inst.spec, &inst.cfg)?.total;
        probe.data_mut()[i] = orig - h;
        let minus =
            one_to_many_loss_from_logits(&probe, &inst.targets, &inst.spec, &inst.cfg)?.total;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

pub fn run_grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut redrawn = 0;
    let mut max_rel_error: f64 = 0.0;
    for _ in 0..cfg.instances {
        let inst = loop {
            let candidate = random_instance(&mut rng, cfg.max_bins, cfg.max_size);
            if is_smooth(&candidate)? {
                break candidate;
            }
            redrawn += 1;
        };
        max_rel_error = max_rel_error.max(check_instance(&inst, cfg.step)?);
    }
    Ok(GradCheckReport {
        instances: cfg.instances,
        redrawn,
        max_rel_error,
    })
}
