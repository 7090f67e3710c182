//! End-to-end experiments on generated scenes: label recovery through the
//! registration pipeline and the weighted-vs-voxel metric correlation study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gslang_core::eval::{
    default_bounds, mean_weighted_iou, metric_correlation, pseudo_label_gaussians, scene_metrics,
    significant_scores, voxelize_scene, CorrelationReport, PseudoLabelMode, UndefinedIou,
    VoxelConfig,
};
use gslang_core::pq::{train_codebook, KMeansConfig, NormMode, PQCodebook};
use gslang_core::query::segment_argmax;
use gslang_core::registration::{register, RegistrationConfig};
use gslang_core::synth::{gen_scene, random_unit_vectors, render_masks, LayoutSpec, SceneSpec};
use gslang_core::{Label, Result};

/// Codebook trained on random unit vectors, independent of any scene.
pub fn generic_codebook(dim: usize, subspaces: usize, k: usize, n: usize, seed: u64) -> Result<PQCodebook> {
    let db = random_unit_vectors(n, dim, seed);
    train_codebook(&db, dim, subspaces, k, seed, &KMeansConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    /// Predicted label per original splat; `None` for pruned splats.
    pub predicted: Vec<Label>,
    pub ground_truth: Vec<Label>,
    pub kept: usize,
    /// Fraction of splats whose predicted label equals the generator label.
    pub recovery: f64,
    /// Same, weighted by significant score.
    pub weighted_recovery: f64,
    /// Weighted mIoU against point-cloud pseudo labels.
    pub weighted_miou: Option<f64>,
}

/// Generate, render masks, register with Top-`top_k`, optionally quantize,
/// and segment by argmax over the label embeddings.
pub fn run_pipeline(spec: &SceneSpec, top_k: usize, codebook: Option<&PQCodebook>) -> Result<PipelineOutcome> {
    let synth = gen_scene(spec)?;
    let cameras = spec.rig.cameras()?;
    let masks = render_masks(
        &synth.scene,
        &synth.label_embeddings,
        synth.dim,
        &cameras,
        spec.noise_sigma,
        spec.seed,
    )?;
    let cfg = RegistrationConfig {
        top_k,
        ..Default::default()
    };
    let (mut rs, _) = register(&synth.scene, &masks, &cfg)?;
    if let Some(cb) = codebook {
        rs = rs.quantize(cb)?;
    }
    let queries: Vec<Vec<f32>> = (0..synth.label_count())
        .map(|l| synth.label_embedding(l).to_vec())
        .collect();
    let seg = segment_argmax(&rs, codebook, &queries, NormMode::default())?;
    let predicted: Vec<Label> = rs
        .survivor_map
        .iter()
        .map(|s| s.map(|j| seg[j] as u32))
        .collect();

    let truth = synth.scene.labels();
    let d = significant_scores(&synth.scene);
    let total: f64 = d.iter().sum();
    let (mut hits, mut weighted) = (0usize, 0.0);
    for ((p, t), w) in predicted.iter().zip(&truth).zip(&d) {
        if p.is_some() && p == t {
            hits += 1;
            weighted += w;
        }
    }
    let pseudo: Vec<Label> = pseudo_label_gaussians(&synth.points, &synth.scene, PseudoLabelMode::Affinity)?
        .into_iter()
        .map(Some)
        .collect();
    let report = mean_weighted_iou(
        &predicted,
        &pseudo,
        &d,
        synth.label_count() as u32,
        UndefinedIou::Exclude,
    )?;
    Ok(PipelineOutcome {
        kept: rs.len(),
        recovery: hits as f64 / truth.len() as f64,
        weighted_recovery: weighted / total,
        weighted_miou: report.miou,
        predicted,
        ground_truth: truth,
    })
}

/// Scenes and corruption used by [`run_correlation_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationStudy {
    pub scenes: usize,
    pub seed: u64,
    pub gaussian_count: usize,
    pub label_count: usize,
    pub layout: LayoutSpec,
    /// Each scene relabels every splat with probability drawn from
    /// `[min_corruption, max_corruption)`.
    pub min_corruption: f64,
    pub max_corruption: f64,
}

impl Default for CorrelationStudy {
    fn default() -> Self {
        Self {
            scenes: 30,
            seed: 0,
            gaussian_count: 100,
            label_count: 4,
            layout: LayoutSpec {
                cluster_spread: 0.6,
                scale_min: 0.02,
                scale_max: 0.2,
                ..Default::default()
            },
            min_corruption: 0.05,
            max_corruption: 0.5,
        }
    }
}

/// Replace each label by a different random label with probability `rate`.
pub fn corrupt_labels(labels: &[Label], rate: f64, label_count: u32, rng: &mut impl Rng) -> Vec<Label> {
    labels
        .iter()
        .map(|&l| match l {
            Some(l) if label_count > 1 && rng.random::<f64>() < rate => {
                Some((l + rng.random_range(1..label_count)) % label_count)
            }
            other => other,
        })
        .collect()
}

/// Per-scene weighted, unweighted and voxel mIoU of randomly corrupted
/// pseudo labels, and the Pearson correlations between them.
pub fn run_correlation_study(study: &CorrelationStudy) -> Result<CorrelationReport> {
    let l = study.label_count as u32;
    let mut metrics = Vec::with_capacity(study.scenes);
    for s in 0..study.scenes {
        let spec = SceneSpec {
            seed: study.seed.wrapping_add(s as u64),
            gaussian_count: study.gaussian_count,
            label_count: study.label_count,
            dim: 8,
            layout: study.layout.clone(),
            ..Default::default()
        };
        let synth = gen_scene(&spec)?;
        let gt: Vec<Label> = pseudo_label_gaussians(&synth.points, &synth.scene, PseudoLabelMode::Affinity)?
            .into_iter()
            .map(Some)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1);
        let rate = rng.random_range(study.min_corruption..study.max_corruption);
        let pred = corrupt_labels(&gt, rate, l, &mut rng);

        let d = significant_scores(&synth.scene);
        let bounds = default_bounds(&synth.scene, 3.0)?;
        let cfg = VoxelConfig::default();
        let gt_grid = voxelize_scene(&synth.scene.with_labels(&gt)?, bounds, study.label_count, &cfg)?;
        let pred_grid = voxelize_scene(&synth.scene.with_labels(&pred)?, bounds, study.label_count, &cfg)?;
        metrics.push(scene_metrics(&pred, &gt, &d, l, &gt_grid, &pred_grid, UndefinedIou::Exclude)?);
    }
    metric_correlation(&metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corruption_always_changes_the_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let labels: Vec<Label> = (0..100).map(|i| Some(i % 3)).collect();
        let all = corrupt_labels(&labels, 1.0, 3, &mut rng);
        assert!(all.iter().zip(&labels).all(|(a, b)| a != b && a.unwrap() < 3));
        assert_eq!(corrupt_labels(&labels, 0.0, 3, &mut rng), labels);
    }

    #[test]
    fn small_pipeline_recovers_labels() {
        let spec = SceneSpec {
            gaussian_count: 40,
            label_count: 2,
            dim: 16,
            rig: gslang_core::synth::RigSpec {
                views: 4,
                width: 48,
                height: 48,
                focal: 48.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_pipeline(&spec, 20, None).unwrap();
        assert!(out.recovery > 0.9, "{out:?}");
    }
}
