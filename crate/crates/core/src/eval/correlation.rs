use serde::{Deserialize, Serialize};

use super::iou::{mean_weighted_iou, UndefinedIou};
use super::voxel::{voxel_miou, VoxelGrid};
use crate::error::{Error, Result};
use crate::gaussian::Label;

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Ok(None);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// The three mIoU figures compared for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub weighted_miou: f64,
    pub unweighted_miou: f64,
    pub voxel_miou: f64,
}

/// Per-splat mIoU with and without significant scores, plus voxel mIoU.
pub fn scene_metrics(
    pred: &[Label],
    gt: &[Label],
    d: &[f64],
    label_count: u32,
    gt_grid: &VoxelGrid,
    pred_grid: &VoxelGrid,
    undefined: UndefinedIou,
) -> Result<SceneMetrics> {
    let undefined_miou = || Error::InvalidArgument("no label has a defined IoU".into());
    let weighted = mean_weighted_iou(pred, gt, d, label_count, undefined)?;
    let ones = vec![1.0; d.len()];
    let unweighted = mean_weighted_iou(pred, gt, &ones, label_count, undefined)?;
    let voxel = voxel_miou(gt_grid, pred_grid, undefined)?;
    Ok(SceneMetrics {
        weighted_miou: weighted.miou.ok_or_else(undefined_miou)?,
        unweighted_miou: unweighted.miou.ok_or_else(undefined_miou)?,
        voxel_miou: voxel.miou.ok_or_else(undefined_miou)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub scenes: Vec<SceneMetrics>,
    /// r(weighted mIoU, voxel mIoU).
    pub r_weighted: Option<f64>,
    /// r(unweighted mIoU, voxel mIoU), the control without significant scores.
    pub r_unweighted: Option<f64>,
}

pub const MIN_CORRELATION_SCENES: usize = 3;

pub fn metric_correlation(scenes: &[SceneMetrics]) -> Result<CorrelationReport> {
    if scenes.len() < MIN_CORRELATION_SCENES {
        return Err(Error::InsufficientData {
            needed: MIN_CORRELATION_SCENES,
            got: scenes.len(),
        });
    }
    let voxel: Vec<f64> = scenes.iter().map(|s| s.voxel_miou).collect();
    let weighted: Vec<f64> = scenes.iter().map(|s| s.weighted_miou).collect();
    let unweighted: Vec<f64> = scenes.iter().map(|s| s.unweighted_miou).collect();
    Ok(CorrelationReport {
        r_weighted: pearson(&weighted, &voxel)?,
        r_unweighted: pearson(&unweighted, &voxel)?,
        scenes: scenes.to_vec(),
    })
}
