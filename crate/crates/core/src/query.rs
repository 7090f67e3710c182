//! Similarity scoring, relevancy re-ranking, thresholding and argmax
//! segmentation over registered splats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pq::{build_query_lut, score_codes, NormMode, PQCodebook};
use crate::registration::{Features, RegisteredScene, UNIT_NORM_TOL};

/// Per-Gaussian scores aligned with the registered scene order.
pub type ScoreVector = Vec<f32>;

/// A query embedding plus the canonical embeddings used for relevancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub embedding: Vec<f32>,
    #[serde(default)]
    pub canonicals: Vec<Vec<f32>>,
    #[serde(default)]
    pub threshold: f64,
}

fn check_unit(v: &[f32], what: &str) -> Result<()> {
    let n = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
        return Err(Error::InvalidArgument(format!("{what} has norm {n}, expected unit")));
    }
    Ok(())
}

impl QuerySpec {
    pub fn validate(&self, relevancy: bool) -> Result<()> {
        check_unit(&self.embedding, "query embedding")?;
        if relevancy && self.canonicals.is_empty() {
            return Err(Error::InvalidArgument(
                "relevancy scoring needs at least one canonical embedding".into(),
            ));
        }
        for (i, c) in self.canonicals.iter().enumerate() {
            if c.len() != self.embedding.len() {
                return Err(Error::InvalidArgument(format!(
                    "canonical {i} has dimension {}, query has {}",
                    c.len(),
                    self.embedding.len()
                )));
            }
            check_unit(c, "canonical embedding")?;
        }
        Ok(())
    }
}

const SCORE_BLOCK: usize = 4096;

/// Similarity of every registered splat to `q`.
///
/// Full-precision features get the exact cosine; PQ codes are scored through
/// one query lookup table with the chosen normalization.
pub fn score_scene(
    rs: &RegisteredScene,
    cb: Option<&PQCodebook>,
    q: &[f32],
    mode: NormMode,
) -> Result<ScoreVector> {
    let dim = rs.features.dim();
    if q.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "query has dimension {}, features have {dim}",
            q.len()
        )));
    }
    match &rs.features {
        Features::Full { data, .. } => {
            let qn = q.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            Ok(data
                .par_chunks(dim)
                .map(|f| {
                    let (dot, nn) = f.iter().zip(q).fold((0.0f64, 0.0f64), |(d, n), (&a, &b)| {
                        (d + a as f64 * b as f64, n + a as f64 * a as f64)
                    });
                    let denom = nn.sqrt() * qn;
                    if denom > 0.0 {
                        (dot / denom) as f32
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        Features::Quantized {
            subspaces, codes, ..
        } => {
            let cb = cb.ok_or_else(|| {
                Error::InvalidArgument("PQ-coded features need a codebook".into())
            })?;
            if cb.dim() != dim || cb.subspaces() != *subspaces {
                return Err(Error::InvalidArgument(format!(
                    "codebook ({} dims, {} sub-spaces) does not match features ({dim} dims, {subspaces} sub-spaces)",
                    cb.dim(),
                    cb.subspaces()
                )));
            }
            let lut = build_query_lut(q, cb)?;
            let mut out = vec![0.0f32; rs.features.len()];
            out.par_chunks_mut(SCORE_BLOCK)
                .zip(codes.par_chunks(SCORE_BLOCK * subspaces))
                .try_for_each(|(o, c)| score_codes(c, &lut, mode, o))?;
            Ok(out)
        }
    }
}

/// Minimum over canonicals of the pairwise softmax
/// `exp(f·q) / (exp(f·q) + exp(f·canon_i))`.
///
/// `canon_dots` must be non-empty.
pub fn relevancy_score(query_dot: f64, canon_dots: &[f64]) -> f64 {
    debug_assert!(!canon_dots.is_empty());
    canon_dots
        .iter()
        .map(|&c| 1.0 / (1.0 + (c - query_dot).exp()))
        .fold(f64::INFINITY, f64::min)
}

/// Relevancy of every splat to the query against its canonicals.
pub fn relevancy_scores(
    rs: &RegisteredScene,
    cb: Option<&PQCodebook>,
    spec: &QuerySpec,
    mode: NormMode,
) -> Result<ScoreVector> {
    spec.validate(true)?;
    let q = score_scene(rs, cb, &spec.embedding, mode)?;
    let canon = spec
        .canonicals
        .iter()
        .map(|c| score_scene(rs, cb, c, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut dots = vec![0.0f64; canon.len()];
    Ok(q.iter()
        .enumerate()
        .map(|(i, &s)| {
            for (d, c) in dots.iter_mut().zip(&canon) {
                *d = c[i] as f64;
            }
            relevancy_score(s as f64, &dots) as f32
        })
        .collect())
}

/// Indices whose score is at least `tau`, ascending.
pub fn select_threshold(scores: &[f32], tau: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s as f64 >= tau)
        .map(|(i, _)| i)
        .collect()
}

/// Index of the highest score per column; ties go to the lower row.
pub fn argmax_rows(scores: &[ScoreVector]) -> Vec<usize> {
    let n = scores.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut best = 0;
            for (l, s) in scores.iter().enumerate().skip(1) {
                if s[i] > scores[best][i] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Label of highest similarity for every registered splat.
pub fn segment_argmax(
    rs: &RegisteredScene,
    cb: Option<&PQCodebook>,
    label_queries: &[Vec<f32>],
    mode: NormMode,
) -> Result<Vec<usize>> {
    if label_queries.is_empty() {
        return Err(Error::InvalidArgument("segmentation needs at least one label".into()));
    }
    let scores = label_queries
        .iter()
        .map(|q| score_scene(rs, cb, q, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_rows(&scores))
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::gaussian::{Gaussian3D, Scene};

    fn full_scene(rows: &[Vec<f32>]) -> RegisteredScene {
        let dim = rows[0].len();
        RegisteredScene {
            scene: Scene::new(
                rows.iter()
                    .map(|_| Gaussian3D::isotropic(Vector3::zeros(), 0.1, 0.5))
                    .collect(),
            ),
            features: Features::Full {
                dim,
                data: rows.concat(),
            },
            survivor_map: (0..rows.len()).map(Some).collect(),
        }
    }

    #[test]
    fn cosine_on_full_features() {
        let rs = full_scene(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let s = score_scene(&rs, None, &[1.0, 0.0, 0.0], NormMode::SubNormSum).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        assert!(score_scene(&rs, None, &[1.0, 0.0], NormMode::SubNormSum).is_err());
    }

    #[test]
    fn quantized_features_need_codebook() {
        let rs = RegisteredScene {
            features: Features::Quantized {
                dim: 2,
                subspaces: 1,
                codes: vec![0],
            },
            ..full_scene(&[vec![1.0, 0.0]])
        };
        assert!(score_scene(&rs, None, &[1.0, 0.0], NormMode::SubNormSum).is_err());
    }

    #[test]
    fn relevancy_values() {
        assert_eq!(relevancy_score(0.3, &[0.3, 0.3]), 0.5);
        let e = std::f64::consts::E;
        assert!((relevancy_score(1.0, &[0.0]) - e / (e + 1.0)).abs() < 1e-15);
        assert!((relevancy_score(1.0, &[0.0]) - 0.7311).abs() < 1e-4);
        let two = relevancy_score(1.0, &[0.0, 0.9]);
        assert!((two - e / (e + 0.9f64.exp())).abs() < 1e-15);
        assert!((two - 0.5250).abs() < 1e-4);
    }

    #[test]
    fn threshold_selection() {
        let s = [0.2, 0.7, 0.5];
        assert_eq!(select_threshold(&s, -2.0), vec![0, 1, 2]);
        assert!(select_threshold(&s, 1.1).is_empty());
        assert_eq!(select_threshold(&s, 0.5), vec![1, 2]);
    }

    #[test]
    fn argmax_segmentation() {
        let labels = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let rs = full_scene(&[labels[2].clone(), labels[0].clone(), labels[1].clone()]);
        let seg = segment_argmax(&rs, None, &labels, NormMode::SubNormSum).unwrap();
        assert_eq!(seg, vec![2, 0, 1]);
        let one = segment_argmax(&rs, None, &labels[1..2], NormMode::SubNormSum).unwrap();
        assert_eq!(one, vec![0, 0, 0]);
        assert!(segment_argmax(&rs, None, &[], NormMode::SubNormSum).is_err());
        // Exact ties resolve to the lowest label.
        assert_eq!(argmax_rows(&[vec![0.5], vec![0.5]]), vec![0]);
    }

    #[test]
    fn query_spec_validation() {
        let spec = QuerySpec {
            embedding: vec![1.0, 0.0],
            canonicals: vec![],
            threshold: 0.5,
        };
        assert!(spec.validate(false).is_ok());
        assert!(spec.validate(true).is_err());
        let bad = QuerySpec {
            embedding: vec![1.0, 1.0],
            ..spec
        };
        assert!(bad.validate(false).is_err());
    }

    #[test]
    fn relevancy_over_scene() {
        let rs = full_scene(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let spec = QuerySpec {
            embedding: vec![1.0, 0.0],
            canonicals: vec![vec![0.0, 1.0]],
            threshold: 0.5,
        };
        let r = relevancy_scores(&rs, None, &spec, NormMode::SubNormSum).unwrap();
        let e = std::f64::consts::E;
        assert!((r[0] as f64 - e / (e + 1.0)).abs() < 1e-6);
        assert!((r[1] as f64 - 1.0 / (1.0 + e)).abs() < 1e-6);
    }
}
