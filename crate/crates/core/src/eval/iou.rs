use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian3D, Label, Scene};

/// IoU thresholds of the accuracy buckets in [`IouReport`].
pub const ACCURACY_THRESHOLDS: [f64; 3] = [0.15, 0.30, 0.45];

/// Relative ellipsoid volume times opacity.
pub fn significant_score(g: &Gaussian3D) -> f64 {
    g.scale.x * g.scale.y * g.scale.z * g.opacity
}

pub fn significant_scores(scene: &Scene) -> Vec<f64> {
    scene.gaussians.iter().map(significant_score).collect()
}

/// Significance-weighted IoU of one label; `None` when the union is empty.
pub fn weighted_iou(pred: &[Label], gt: &[Label], d: &[f64], label: u32) -> Result<Option<f64>> {
    if pred.len() != gt.len() || pred.len() != d.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions, {} ground-truth labels, {} scores",
            pred.len(),
            gt.len(),
            d.len()
        )));
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for ((&p, &g), &w) in pred.iter().zip(gt).zip(d) {
        let p = p == Some(label);
        let g = g == Some(label);
        if p && g {
            inter += w;
        }
        if p || g {
            union += w;
        }
    }
    Ok(if union > 0.0 { Some(inter / union) } else { None })
}

/// What an empty-union label contributes to the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndefinedIou {
    #[default]
    Exclude,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBucket {
    pub threshold: f64,
    /// Fraction of averaged labels with IoU above `threshold`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_label: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub accuracy: Vec<AccuracyBucket>,
}

fn averaged(per_label: &[Option<f64>], undefined: UndefinedIou) -> Vec<f64> {
    per_label
        .iter()
        .filter_map(|v| match (v, undefined) {
            (Some(v), _) => Some(*v),
            (None, UndefinedIou::Zero) => Some(0.0),
            (None, UndefinedIou::Exclude) => None,
        })
        .collect()
}

/// Mean of the defined entries (or undefined counted as zero).
pub fn mean_defined(per_label: &[Option<f64>], undefined: UndefinedIou) -> Option<f64> {
    let vals = averaged(per_label, undefined);
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub(crate) fn report_from(per_label: Vec<Option<f64>>, undefined: UndefinedIou) -> IouReport {
    let vals = averaged(&per_label, undefined);
    let accuracy = ACCURACY_THRESHOLDS
        .iter()
        .map(|&t| AccuracyBucket {
            threshold: t,
            accuracy: if vals.is_empty() {
                0.0
            } else {
                vals.iter().filter(|&&v| v > t).count() as f64 / vals.len() as f64
            },
        })
        .collect();
    IouReport {
        miou: mean_defined(&per_label, undefined),
        per_label,
        accuracy,
    }
}

/// Per-label weighted IoU over labels `0..label_count` and their mean.
pub fn mean_weighted_iou(
    pred: &[Label],
    gt: &[Label],
    d: &[f64],
    label_count: u32,
    undefined: UndefinedIou,
) -> Result<IouReport> {
    let per_label = (0..label_count)
        .map(|l| weighted_iou(pred, gt, d, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from(per_label, undefined))
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;

    const A: Label = Some(0);
    const B: Label = Some(1);

    #[test]
    fn significant_score_cases() {
        let mut g = Gaussian3D::isotropic(Vector3::zeros(), 1.0, 0.5);
        g.scale = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(significant_score(&g), 3.0);
        g.opacity = 0.0;
        assert_eq!(significant_score(&g), 0.0);
        let g = Gaussian3D::isotropic(Vector3::zeros(), 0.1, 1.0);
        assert!((significant_score(&g) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn weighted_iou_cases() {
        let d = [1.0, 2.0, 4.0];
        assert_eq!(weighted_iou(&[A, A, B], &[A, A, B], &d, 0).unwrap(), Some(1.0));
        assert_eq!(weighted_iou(&[A, A, B], &[A, A, B], &d, 1).unwrap(), Some(1.0));
        assert_eq!(weighted_iou(&[A, A, A], &[B, B, B], &d, 0).unwrap(), Some(0.0));
        assert_eq!(weighted_iou(&[A, B, B], &[A, A, B], &d, 0).unwrap(), Some(1.0 / 3.0));
        assert_eq!(weighted_iou(&[A, B, B], &[A, A, B], &d, 5).unwrap(), None);
        assert!(weighted_iou(&[A], &[A, B], &[1.0], 0).is_err());
    }

    #[test]
    fn unlabeled_predictions_count_only_in_union() {
        let d = [1.0, 1.0];
        assert_eq!(weighted_iou(&[None, A], &[A, A], &d, 0).unwrap(), Some(0.5));
    }

    #[test]
    fn report_excludes_undefined_labels() {
        let d = [1.0, 2.0, 4.0];
        let r = mean_weighted_iou(&[A, B, B], &[A, A, B], &d, 3, UndefinedIou::Exclude).unwrap();
        assert_eq!(r.per_label[2], None);
        let expect = (1.0 / 3.0 + 4.0 / 6.0) / 2.0;
        assert!((r.miou.unwrap() - expect).abs() < 1e-15);
        assert_eq!(r.accuracy[0].accuracy, 1.0);
        assert_eq!(r.accuracy[2].accuracy, 0.5);
        let z = mean_weighted_iou(&[A, B, B], &[A, A, B], &d, 3, UndefinedIou::Zero).unwrap();
        assert!((z.miou.unwrap() - (1.0 / 3.0 + 4.0 / 6.0) / 3.0).abs() < 1e-15);
    }
}
