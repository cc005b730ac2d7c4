//! Multi-seed supervision experiments with paired bootstrap comparisons.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_supervision, SimStrategy, SupervisionMetrics};
use super::radar::{simulate_radar, RadarNoiseModel};
use super::scene::{generate_scene, SceneSpec};
use crate::depth::{Aggregation, DepthBinSpec, RadarPoint, RadiusConfig};
use crate::error::{Error, Result};
use crate::geometry::{Calibration, CalibrationFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub delta_theta_deg: f64,
    pub delta_phi_deg: f64,
    pub range_sigma: f64,
    pub points_per_object: [usize; 2],
}

impl NoiseConfig {
    pub fn model(&self, seed: u64) -> RadarNoiseModel {
        RadarNoiseModel {
            delta_theta: self.delta_theta_deg.to_radians(),
            delta_phi: self.delta_phi_deg.to_radians(),
            range_sigma: self.range_sigma,
            points_per_object: self.points_per_object,
            seed,
        }
    }
}

/// One evaluated configuration. `radius` overrides the experiment-wide
/// radius settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub strategy: SimStrategy,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub radius: Option<RadiusConfig>,
}

fn default_aggregation() -> Aggregation {
    Aggregation::Min
}

/// Claim that `better` has a higher mean hit rate than `worse`. A strict
/// claim needs the lower confidence bound of the paired difference to be
/// above zero; a non-strict one only needs it to be at least zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub better: String,
    pub worse: String,
    #[serde(default = "default_true")]
    pub strict: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 2000,
            seed: 0,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: SeedRange,
    pub calibration: CalibrationFile,
    pub stride: usize,
    pub bins: DepthBinSpec,
    pub scene: SceneSpec,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub radius: RadiusConfig,
    pub configs: Vec<RunConfig>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Calibration::from_file_repr(&self.calibration)?;
        if self.stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        self.bins.validate()?;
        self.scene.validate()?;
        self.noise.model(0).validate()?;
        self.radius.validate()?;
        if self.configs.is_empty() {
            return Err(Error::invalid("at least one configuration is required"));
        }
        for (i, c) in self.configs.iter().enumerate() {
            if self.configs[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::invalid(format!(
                    "duplicate configuration name {:?}",
                    c.name
                )));
            }
            let radius = c.radius.unwrap_or(self.radius);
            radius.validate()?;
            if c.strategy == SimStrategy::Fixed && radius.fixed_r.is_none() {
                return Err(Error::invalid(format!(
                    "configuration {:?} uses the fixed strategy without fixed_r",
                    c.name
                )));
            }
        }
        for cmp in &self.comparisons {
            for name in [&cmp.better, &cmp.worse] {
                if !self.configs.iter().any(|c| &c.name == name) {
                    return Err(Error::invalid(format!(
                        "comparison names unknown configuration {name:?}"
                    )));
                }
            }
        }
        let b = &self.bootstrap;
        if b.resamples == 0 || !(b.confidence > 0.0 && b.confidence < 1.0) {
            return Err(Error::invalid(
                "bootstrap needs resamples ≥ 1 and confidence in (0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub seed: u64,
    pub config: String,
    pub hit_rate: f64,
    pub depth_mae: f64,
    pub n_targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub name: String,
    pub mean_hit_rate: f64,
    pub mean_depth_mae: f64,
    pub mean_n_targets: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub better: String,
    pub worse: String,
    pub strict: bool,
    /// Mean over seeds of `hit_rate(better) − hit_rate(worse)`.
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub seeds: u64,
    pub resamples: usize,
    pub confidence: f64,
    pub configs: Vec<ConfigSummary>,
    pub comparisons: Vec<ComparisonSummary>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Seed-major, configurations in declaration order.
    pub rows: Vec<SeedRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    /// Hit rates of configuration `name` in seed order.
    pub fn hit_rates(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.config == name)
            .map(|r| r.hit_rate)
            .collect()
    }
}

/// Metrics of every configuration for one seed. Scene and radar draws are
/// shared by all configurations.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SupervisionMetrics>> {
    let calib = Calibration::from_file_repr(&cfg.calibration)?;
    let scene = generate_scene(seed, &cfg.scene)?;
    let gt = scene.render(&calib, cfg.stride)?;
    let points: Vec<RadarPoint> = simulate_radar(&scene, &calib, &cfg.noise.model(seed))?
        .into_iter()
        .map(|p| p.point)
        .collect();
    cfg.configs
        .iter()
        .map(|c| {
            evaluate_supervision(
                &gt,
                &points,
                &calib,
                &cfg.bins,
                &c.radius.unwrap_or(cfg.radius),
                c.strategy,
                c.aggregation,
            )
        })
        .collect()
}

/// Percentile bootstrap interval of the mean of `values`.
pub fn bootstrap_mean_ci(
    values: &[f64],
    resamples: usize,
    seed: u64,
    confidence: f64,
) -> (f64, f64) {
    if values.is_empty() || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    let lo = ((alpha / 2.0) * resamples as f64).floor() as usize;
    let hi = (((1.0 - alpha / 2.0) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    (means[lo.min(resamples - 1)], means[hi])
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.seeds.count).map(|i| cfg.seeds.start + i).collect();
    let per_seed: Vec<Vec<SupervisionMetrics>> = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(seeds.len() * cfg.configs.len());
    for (&seed, metrics) in seeds.iter().zip(&per_seed) {
        for (c, m) in cfg.configs.iter().zip(metrics) {
            rows.push(SeedRow {
                seed,
                config: c.name.clone(),
                hit_rate: m.hit_rate,
                depth_mae: m.depth_mae,
                n_targets: m.n_targets,
            });
        }
    }

    let column = |idx: usize, f: fn(&SupervisionMetrics) -> f64| -> Vec<f64> {
        per_seed.iter().map(|m| f(&m[idx])).collect()
    };
    let configs = cfg
        .configs
        .iter()
        .enumerate()
        .map(|(i, c)| ConfigSummary {
            name: c.name.clone(),
            mean_hit_rate: mean(&column(i, |m| m.hit_rate)),
            mean_depth_mae: mean(&column(i, |m| m.depth_mae)),
            mean_n_targets: mean(&column(i, |m| m.n_targets as f64)),
        })
        .collect();

    let index = |name: &str| {
        cfg.configs
            .iter()
            .position(|c| c.name == name)
            .expect("validated")
    };
    let b = &cfg.bootstrap;
    let comparisons: Vec<ComparisonSummary> = cfg
        .comparisons
        .iter()
        .map(|cmp| {
            let better = column(index(&cmp.better), |m| m.hit_rate);
            let worse = column(index(&cmp.worse), |m| m.hit_rate);
            let diffs: Vec<f64> = better.iter().zip(&worse).map(|(a, b)| a - b).collect();
            let (ci_low, ci_high) = bootstrap_mean_ci(&diffs, b.resamples, b.seed, b.confidence);
            let holds = if cmp.strict {
                ci_low > 0.0
            } else {
                ci_low >= 0.0
            };
            ComparisonSummary {
                better: cmp.better.clone(),
                worse: cmp.worse.clone(),
                strict: cmp.strict,
                mean_diff: mean(&diffs),
                ci_low,
                ci_high,
                holds,
            }
        })
        .collect();
    let all_hold = comparisons.iter().all(|c| c.holds);
    Ok(ExperimentResult {
        rows,
        summary: ExperimentSummary {
            seeds: cfg.seeds.count,
            resamples: b.resamples,
            confidence: b.confidence,
            configs,
            comparisons,
            all_hold,
        },
    })
}

/// One row per seed and configuration.
pub fn write_rows_csv<W: Write>(rows: &[SeedRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `seed,config,metric,value`.
pub fn write_plot_csv<W: Write>(rows: &[SeedRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seed", "config", "metric", "value"])?;
    for r in rows {
        for (metric, value) in [
            ("hit_rate", r.hit_rate),
            ("depth_mae", r.depth_mae),
            ("n_targets", r.n_targets as f64),
        ] {
            w.write_record([
                r.seed.to_string(),
                r.config.clone(),
                metric.into(),
                value.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
