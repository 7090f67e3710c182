use nalgebra::{Cholesky, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{covariance_unchecked, Gaussian3D, Scene};

/// Added to every squared scale before inverting a covariance.
pub const COVARIANCE_EPS: f64 = 1e-8;

/// Points with semantic labels in `[0, label_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<u32>,
    pub label_count: u32,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Vector3<f64>>, labels: Vec<u32>, label_count: u32) -> Result<Self> {
        let pc = Self {
            points,
            labels,
            label_count,
        };
        pc.validate()?;
        Ok(pc)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("point cloud is empty".into()));
        }
        if self.points.len() != self.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} labels",
                self.points.len(),
                self.labels.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.label_count) {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside [0, {})",
                self.label_count
            )));
        }
        Ok(())
    }
}

/// A splat's regularized inverse covariance and normalizer, ready for
/// repeated Mahalanobis and density queries.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    pub center: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub inverse: Matrix3<f64>,
    /// `(2π)^{3/2}·sqrt(det Σ)`.
    pub normalizer: f64,
}

impl GaussianKernel {
    pub fn new(g: &Gaussian3D) -> Result<Self> {
        let n = g.rotation.norm();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(Error::NumericalDegeneracy("zero rotation quaternion".into()));
        }
        let q = g.rotation / n;
        let cov = covariance_unchecked(&g.scale, &q, COVARIANCE_EPS);
        let chol = Cholesky::new(cov).ok_or_else(|| {
            Error::NumericalDegeneracy("covariance is not positive definite".into())
        })?;
        let det = chol.determinant();
        let inverse = chol.inverse();
        if !(det > 0.0 && det.is_finite() && inverse.iter().all(|v| v.is_finite())) {
            return Err(Error::NumericalDegeneracy(format!(
                "covariance determinant {det:e} is not usable"
            )));
        }
        Ok(Self {
            center: g.center,
            covariance: cov,
            inverse,
            normalizer: (2.0 * std::f64::consts::PI).powf(1.5) * det.sqrt(),
        })
    }

    #[inline]
    pub fn mahalanobis(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.center;
        d.dot(&(self.inverse * d))
    }

    /// Normalized 3D density at `p`.
    #[inline]
    pub fn density(&self, p: &Vector3<f64>) -> f64 {
        (-0.5 * self.mahalanobis(p)).exp() / self.normalizer
    }
}

/// `(p − μ)ᵀ Σ⁻¹ (p − μ)` with the regularized covariance of `g`.
pub fn mahalanobis_distance(p: &Vector3<f64>, g: &Gaussian3D) -> Result<f64> {
    Ok(GaussianKernel::new(g)?.mahalanobis(p))
}

/// How per-label Mahalanobis evidence is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoLabelMode {
    /// Argmax of summed `exp(−d/2)`.
    #[default]
    Affinity,
    /// Argmax of summed raw distances.
    PaperVerbatim,
}

/// Label per splat from a labeled point cloud; ties go to the lowest label.
pub fn pseudo_label_gaussians(
    pc: &LabeledPointCloud,
    scene: &Scene,
    mode: PseudoLabelMode,
) -> Result<Vec<u32>> {
    pc.validate()?;
    let kernels = scene
        .gaussians
        .iter()
        .map(GaussianKernel::new)
        .collect::<Result<Vec<_>>>()?;
    let labels = kernels
        .par_iter()
        .map(|k| {
            let mut sums = vec![0.0f64; pc.label_count as usize];
            for (p, &l) in pc.points.iter().zip(&pc.labels) {
                let d = k.mahalanobis(p);
                sums[l as usize] += match mode {
                    PseudoLabelMode::Affinity => (-0.5 * d).exp(),
                    PseudoLabelMode::PaperVerbatim => d,
                };
            }
            let mut best = 0;
            for (l, &s) in sums.iter().enumerate().skip(1) {
                if s > sums[best] {
                    best = l;
                }
            }
            best as u32
        })
        .collect();
    Ok(labels)
}
