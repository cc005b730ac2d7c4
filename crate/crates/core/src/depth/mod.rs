//! Radar-derived depth supervision.
//!
//! Radar points are projected into a feature map to give sparse depth
//! targets. Each target supervises a disk of pixels around its projection
//! whose radius comes from the point's radar cross section, and the loss of
//! a target is the minimum (or, as an ablation, maximum) per-pixel depth
//! loss over that disk.

mod bins;
pub mod gradcheck;
mod loss;
pub(crate) use loss::neighborhood;
mod targets;

pub use bins::DepthBinSpec;
pub use loss::{
    expected_depth, one_to_many_loss, one_to_many_loss_from_logits, one_to_many_loss_grad,
    pixel_depth_loss, Aggregation, LossConfig, LossReport, Strategy, PROB_FLOOR,
};
pub use targets::{
    build_depth_targets, neighborhood_radius, read_radar_csv, read_radar_csv_from,
    targets_from_tensor, targets_to_tensor, DepthTarget, DropCounts, RadarPoint, RadiusConfig,
    TargetSet,
};
