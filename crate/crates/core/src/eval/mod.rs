//! Evaluation of 3D segmentations: Mahalanobis pseudo-labels, volume-weighted
//! IoU over splats, and a voxel-grid reference metric.

mod correlation;
mod iou;
mod pseudo;
mod voxel;

pub use correlation::{
    metric_correlation, pearson, scene_metrics, CorrelationReport, SceneMetrics,
    MIN_CORRELATION_SCENES,
};
pub use iou::{
    mean_defined, mean_weighted_iou, significant_score, significant_scores, weighted_iou,
    AccuracyBucket, IouReport, UndefinedIou, ACCURACY_THRESHOLDS,
};
pub use pseudo::{
    mahalanobis_distance, pseudo_label_gaussians, GaussianKernel, LabeledPointCloud,
    PseudoLabelMode, COVARIANCE_EPS,
};
pub use voxel::{
    default_bounds, voxel_iou, voxel_label_scores, voxel_miou, voxelize_scene, DensityThreshold,
    VoxelConfig, VoxelGrid, DEFAULT_CELL_BUDGET, DEFAULT_DIAGONAL_DIVISIONS,
    DEFAULT_RELATIVE_THRESHOLD,
};
