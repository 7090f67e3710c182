//! EWA projection and front-to-back alpha compositing on the CPU.
//!
//! Compositing follows the usual splatting rasterizer conventions: splats are
//! ordered by camera-frame depth of their centers, each contributes
//! `w = T·α̃` and attenuates the transmittance by `(1 − α̃)`. There is no tile
//! binning; every pixel walks the full depth-sorted list, skipping splats whose
//! cutoff ellipse does not cover the pixel.

use std::cmp::Ordering;

use nalgebra::{Matrix2, Matrix2x3, Vector2};

use crate::error::{Error, Result};
use crate::gaussian::{covariance_unchecked, Camera, Gaussian3D, Scene};

/// Numeric constants of the rasterizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterConfig {
    /// Added to both diagonal entries of the 2D covariance (pixels²).
    pub lowpass: f64,
    pub alpha_max: f64,
    /// Effective alphas below this are treated as zero.
    pub alpha_min: f64,
    /// Squared Mahalanobis radius past which a splat contributes nothing.
    pub cutoff_sq: f64,
    /// Traversal stops once transmittance drops below this.
    pub transmittance_min: f64,
    /// Camera-frame depth at or below which a splat is culled.
    pub near: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            lowpass: 0.3,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            cutoff_sq: 9.0,
            transmittance_min: 1e-4,
            near: 0.01,
        }
    }
}

/// A splat projected into the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected2D {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
}

impl Projected2D {
    /// Inverse of the 2D covariance.
    pub fn conic(&self) -> Result<Matrix2<f64>> {
        let c = &self.cov2d;
        let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
        if !(det.is_finite() && det > 0.0 && c[(0, 0)] > 0.0) {
            return Err(Error::NumericalDegeneracy(format!(
                "2D covariance is not positive definite (det = {det:e})"
            )));
        }
        let inv = 1.0 / det;
        Ok(Matrix2::new(
            c[(1, 1)] * inv,
            -c[(0, 1)] * inv,
            -c[(1, 0)] * inv,
            c[(0, 0)] * inv,
        ))
    }
}

/// One splat's share of a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayContribution {
    pub gaussian_index: usize,
    pub weight: f64,
}

/// Contributions along one ray, in traversal (front-to-back) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelComposite {
    pub contributions: Vec<RayContribution>,
    pub transmittance: f64,
}

/// Perspective Jacobian of `(fx·x/z, fy·y/z)` at camera-frame point `t`.
pub fn perspective_jacobian(cam: &Camera, t: &nalgebra::Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * t.x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * t.y * iz2,
    )
}

/// Project a splat; `None` when it lies at or behind the near plane.
pub fn project_gaussian(g: &Gaussian3D, cam: &Camera, cfg: &RasterConfig) -> Option<Projected2D> {
    let t = cam.to_camera_frame(&g.center);
    if !(t.z > cfg.near) {
        return None;
    }
    let w = cam.rotation();
    let sigma = covariance_unchecked(&g.scale, &g.rotation, 0.0);
    let j = perspective_jacobian(cam, &t);
    let m = j * w;
    let mut cov2d = m * sigma * m.transpose();
    let off = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(0, 1)] = off;
    cov2d[(1, 0)] = off;
    cov2d[(0, 0)] += cfg.lowpass;
    cov2d[(1, 1)] += cfg.lowpass;
    Some(Projected2D {
        mean2d: Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy),
        cov2d,
        depth: t.z,
    })
}

#[inline]
fn alpha_from_conic(
    conic: &Matrix2<f64>,
    mean2d: &Vector2<f64>,
    opacity: f64,
    pixel: &Vector2<f64>,
    cfg: &RasterConfig,
) -> f64 {
    let dx = pixel.x - mean2d.x;
    let dy = pixel.y - mean2d.y;
    let power = conic[(0, 0)] * dx * dx + 2.0 * conic[(0, 1)] * dx * dy + conic[(1, 1)] * dy * dy;
    if power > cfg.cutoff_sq {
        return 0.0;
    }
    let alpha = (opacity * (-0.5 * power).exp()).min(cfg.alpha_max);
    if alpha < cfg.alpha_min {
        0.0
    } else {
        alpha
    }
}

/// Opacity attenuated by the projected 2D Gaussian at `pixel`.
pub fn effective_alpha(
    p: &Projected2D,
    opacity: f64,
    pixel: &Vector2<f64>,
    cfg: &RasterConfig,
) -> Result<f64> {
    let conic = p.conic()?;
    Ok(alpha_from_conic(&conic, &p.mean2d, opacity, pixel, cfg))
}

#[derive(Debug, Clone)]
struct PreparedSplat {
    index: usize,
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    // Bounding box of the cutoff ellipse.
    min: Vector2<f64>,
    max: Vector2<f64>,
}

/// All splats of a scene projected into one camera and depth-sorted.
///
/// Build once per view, then composite any number of pixels.
#[derive(Debug, Clone)]
pub struct PreparedView {
    splats: Vec<PreparedSplat>,
    config: RasterConfig,
}

impl PreparedView {
    pub fn new(scene: &Scene, cam: &Camera, config: &RasterConfig) -> Result<Self> {
        let mut keyed = Vec::with_capacity(scene.len());
        for (index, g) in scene.gaussians.iter().enumerate() {
            let Some(p) = project_gaussian(g, cam, config) else {
                continue;
            };
            let conic = p.conic()?;
            let rx = (config.cutoff_sq * p.cov2d[(0, 0)]).sqrt();
            let ry = (config.cutoff_sq * p.cov2d[(1, 1)]).sqrt();
            let half = Vector2::new(rx, ry);
            keyed.push((
                p.depth,
                PreparedSplat {
                    index,
                    mean2d: p.mean2d,
                    conic,
                    opacity: g.opacity,
                    min: p.mean2d - half,
                    max: p.mean2d + half,
                },
            ));
        }
        keyed.sort_by(|a, b| match a.0.total_cmp(&b.0) {
            Ordering::Equal => a.1.index.cmp(&b.1.index),
            o => o,
        });
        Ok(Self {
            splats: keyed.into_iter().map(|(_, s)| s).collect(),
            config: *config,
        })
    }

    /// Number of splats in front of the near plane.
    pub fn visible_count(&self) -> usize {
        self.splats.len()
    }

    pub fn composite(&self, pixel: &Vector2<f64>) -> PixelComposite {
        let cfg = &self.config;
        let mut t = 1.0;
        let mut contributions = Vec::new();
        for s in &self.splats {
            if pixel.x < s.min.x || pixel.x > s.max.x || pixel.y < s.min.y || pixel.y > s.max.y {
                continue;
            }
            let alpha = alpha_from_conic(&s.conic, &s.mean2d, s.opacity, pixel, cfg);
            if alpha <= 0.0 {
                continue;
            }
            contributions.push(RayContribution {
                gaussian_index: s.index,
                weight: t * alpha,
            });
            t *= 1.0 - alpha;
            if t < cfg.transmittance_min {
                break;
            }
        }
        PixelComposite {
            contributions,
            transmittance: t,
        }
    }

    /// Composite the center of integer pixel `(x, y)`.
    pub fn composite_pixel_center(&self, x: u32, y: u32) -> PixelComposite {
        self.composite(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5))
    }
}

/// Composite a single pixel of `scene` as seen by `cam`.
///
/// Projects the whole scene; use [`PreparedView`] when compositing many pixels.
pub fn composite_pixel(
    scene: &Scene,
    cam: &Camera,
    pixel: &Vector2<f64>,
    cfg: &RasterConfig,
) -> Result<PixelComposite> {
    Ok(PreparedView::new(scene, cam, cfg)?.composite(pixel))
}

/// The `k` heaviest contributions, heaviest first; ties go to the lower index.
pub fn topk_select(contribs: &[RayContribution], k: usize) -> Vec<RayContribution> {
    let mut out = contribs.to_vec();
    out.sort_by(|a, b| match b.weight.total_cmp(&a.weight) {
        Ordering::Equal => a.gaussian_index.cmp(&b.gaussian_index),
        o => o,
    });
    out.truncate(k);
    out
}

#[cfg(test)]
mod tests {
    use nalgebra::{Matrix4, Quaternion, Vector3};

    use super::*;

    fn identity_camera(f: f64) -> Camera {
        Camera::new(f, f, 32.0, 32.0, 64, 64, Matrix4::identity()).unwrap()
    }

    fn projected(cov: Matrix2<f64>) -> Projected2D {
        Projected2D {
            mean2d: Vector2::new(10.0, 10.0),
            cov2d: cov,
            depth: 1.0,
        }
    }

    #[test]
    fn on_axis_isotropic_projection() {
        let cfg = RasterConfig::default();
        let (f, s) = (50.0, 0.1);
        let cam = identity_camera(f);
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), s, 0.5);
        let p = project_gaussian(&g, &cam, &cfg).unwrap();
        assert_eq!(p.mean2d, Vector2::new(32.0, 32.0));
        let expect = (f * s) * (f * s) + cfg.lowpass;
        assert!((p.cov2d[(0, 0)] - expect).abs() < 1e-9);
        assert!((p.cov2d[(1, 1)] - expect).abs() < 1e-9);
        assert!(p.cov2d[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = identity_camera(50.0);
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, -1.0), 0.1, 0.5);
        assert!(project_gaussian(&g, &cam, &RasterConfig::default()).is_none());
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 0.01), 0.1, 0.5);
        assert!(project_gaussian(&g, &cam, &RasterConfig::default()).is_none());
    }

    #[test]
    fn alpha_at_center_and_falloff() {
        let cfg = RasterConfig::default();
        let p = projected(Matrix2::identity());
        assert_eq!(effective_alpha(&p, 0.8, &p.mean2d, &cfg).unwrap(), 0.8);
        let px = p.mean2d + Vector2::new(1.0, 1.0);
        let a = effective_alpha(&p, 0.5, &px, &cfg).unwrap();
        assert!((a - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((a - 0.18394).abs() < 1e-5);
        assert_eq!(effective_alpha(&p, 1.0, &p.mean2d, &cfg).unwrap(), 0.99);
    }

    #[test]
    fn alpha_cutoffs() {
        let cfg = RasterConfig::default();
        let p = projected(Matrix2::identity());
        // Beyond 3 sigma.
        let far = p.mean2d + Vector2::new(3.01, 0.0);
        assert_eq!(effective_alpha(&p, 1.0, &far, &cfg).unwrap(), 0.0);
        // Below 1/255.
        let dim = p.mean2d + Vector2::new(1.0, 0.0);
        assert_eq!(effective_alpha(&p, 0.005, &dim, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let p = projected(Matrix2::new(1.0, 1.0, 1.0, 1.0));
        assert!(matches!(
            effective_alpha(&p, 0.5, &p.mean2d, &RasterConfig::default()),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn compositing_hand_cases() {
        let cfg = RasterConfig {
            lowpass: 0.0,
            ..RasterConfig::default()
        };
        let cam = identity_camera(50.0);
        let center = Vector2::new(32.0, 32.0);

        let single = Scene::new(vec![Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.1, 0.6)]);
        let c = composite_pixel(&single, &cam, &center, &cfg).unwrap();
        assert_eq!(c.contributions.len(), 1);
        assert_eq!(c.contributions[0].gaussian_index, 0);
        assert!((c.contributions[0].weight - 0.6).abs() < 1e-15);
        assert!((c.transmittance - 0.4).abs() < 1e-15);

        // Listed back-first to check depth sorting.
        let pair = Scene::new(vec![
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 3.0), 0.1, 0.5),
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.1, 0.5),
        ]);
        let c = composite_pixel(&pair, &cam, &center, &cfg).unwrap();
        let got: Vec<_> = c.contributions.iter().map(|r| (r.gaussian_index, r.weight)).collect();
        assert_eq!(got, vec![(1, 0.5), (0, 0.25)]);
        assert_eq!(c.transmittance, 0.25);

        let miss = composite_pixel(&pair, &cam, &Vector2::new(1.0, 1.0), &cfg).unwrap();
        assert!(miss.contributions.is_empty());
        assert_eq!(miss.transmittance, 1.0);
    }

    #[test]
    fn equal_depth_ties_break_by_index() {
        let cfg = RasterConfig::default();
        let cam = identity_camera(50.0);
        let scene = Scene::new(vec![
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.1, 0.3),
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.1, 0.7),
        ]);
        let c = composite_pixel(&scene, &cam, &Vector2::new(32.0, 32.0), &cfg).unwrap();
        assert_eq!(c.contributions[0].gaussian_index, 0);
        assert_eq!(c.contributions[1].gaussian_index, 1);
    }

    #[test]
    fn early_stop_on_opaque_stack() {
        let cfg = RasterConfig::default();
        let cam = identity_camera(50.0);
        let scene = Scene::new(
            (0..10)
                .map(|i| Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0 + i as f64), 0.1, 1.0))
                .collect(),
        );
        let c = composite_pixel(&scene, &cam, &Vector2::new(32.0, 32.0), &cfg).unwrap();
        // 0.01^2 = 1e-4 is not below the threshold, 0.01^3 is.
        assert_eq!(c.contributions.len(), 3);
        assert!(c.transmittance < cfg.transmittance_min);
    }

    #[test]
    fn rotated_camera_projection_is_symmetric() {
        let cfg = RasterConfig::default();
        let cam = Camera::look_at(
            Vector3::new(3.0, -2.0, 1.5),
            Vector3::zeros(),
            Vector3::z(),
            80.0,
            64,
            64,
        )
        .unwrap();
        let half = 0.3f64;
        let g = Gaussian3D {
            rotation: Quaternion::new(half.cos(), half.sin(), 0.0, 0.0),
            scale: Vector3::new(0.2, 0.05, 0.1),
            ..Gaussian3D::isotropic(Vector3::new(0.1, 0.2, 0.3), 1.0, 0.9)
        };
        let p = project_gaussian(&g, &cam, &cfg).unwrap();
        assert_eq!(p.cov2d[(0, 1)], p.cov2d[(1, 0)]);
        assert!(p.conic().is_ok());
    }

    #[test]
    fn topk_cases() {
        let c = |i, w| RayContribution {
            gaussian_index: i,
            weight: w,
        };
        let contribs = vec![c(0, 0.5), c(1, 0.25), c(2, 0.1)];
        assert_eq!(topk_select(&contribs, 2), vec![c(0, 0.5), c(1, 0.25)]);
        assert_eq!(topk_select(&contribs, 10).len(), 3);
        let tied = vec![c(4, 0.2), c(2, 0.2), c(7, 0.2)];
        assert_eq!(topk_select(&tied, 1), vec![c(2, 0.2)]);
        let unordered = vec![c(0, 0.1), c(1, 0.6), c(2, 0.3)];
        assert_eq!(topk_select(&unordered, 2), vec![c(1, 0.6), c(2, 0.3)]);
    }
}
