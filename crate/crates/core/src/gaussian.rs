//! Gaussian scene data model and pinhole cameras.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Tolerance on the quaternion norm accepted as "unit".
pub const QUATERNION_NORM_TOL: f64 = 1e-6;

/// Tolerance on the orthonormality of a camera rotation block.
pub const ROTATION_ORTHO_TOL: f64 = 1e-6;

/// Semantic label slot. `None` is stored as `-1` on disk.
pub type Label = Option<u32>;

/// One anisotropic 3D Gaussian splat.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub center: Vector3<f64>,
    /// Positive half-axis lengths (the diagonal of the scale matrix).
    pub scale: Vector3<f64>,
    /// Unit quaternion, `Quaternion::new(w, x, y, z)`.
    pub rotation: Quaternion<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
    pub label: Label,
}

impl Gaussian3D {
    pub fn new(
        center: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: Quaternion<f64>,
        opacity: f64,
        color: Vector3<f64>,
        label: Label,
    ) -> Result<Self> {
        let g = Self {
            center,
            scale,
            rotation,
            opacity,
            color,
            label,
        };
        g.validate()?;
        Ok(g)
    }

    /// Isotropic, axis-aligned splat. Handy in tests and examples.
    pub fn isotropic(center: Vector3<f64>, scale: f64, opacity: f64) -> Self {
        Self {
            center,
            scale: Vector3::repeat(scale),
            rotation: Quaternion::identity(),
            opacity,
            color: Vector3::repeat(0.5),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite center".into()));
        }
        check_scale(&self.scale)?;
        check_quaternion(&self.rotation)?;
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidParameter(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rotation_matrix(&self.rotation)
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        build_covariance(&self.scale, &self.rotation)
    }
}

fn check_scale(scale: &Vector3<f64>) -> Result<()> {
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive and finite, got ({}, {}, {})",
            scale.x, scale.y, scale.z
        )));
    }
    Ok(())
}

fn check_quaternion(q: &Quaternion<f64>) -> Result<()> {
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOL {
        return Err(Error::InvalidParameter(format!(
            "rotation quaternion norm {norm} is not within {QUATERNION_NORM_TOL} of 1"
        )));
    }
    Ok(())
}

pub(crate) fn rotation_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    UnitQuaternion::new_unchecked(*q)
        .to_rotation_matrix()
        .into_inner()
}

/// `Σ = R·S·Sᵀ·Rᵀ` for a scale vector and unit quaternion.
pub fn build_covariance(scale: &Vector3<f64>, rotation: &Quaternion<f64>) -> Result<Matrix3<f64>> {
    check_scale(scale)?;
    check_quaternion(rotation)?;
    Ok(covariance_unchecked(scale, rotation, 0.0))
}

/// Covariance with `eps` added to every squared scale. Skips validation.
pub(crate) fn covariance_unchecked(
    scale: &Vector3<f64>,
    rotation: &Quaternion<f64>,
    eps: f64,
) -> Matrix3<f64> {
    let r = rotation_matrix(rotation);
    let d = Matrix3::from_diagonal(&scale.map(|s| s * s + eps));
    let sigma = r * d * r.transpose();
    // Exact symmetry; the triple product can drift by an ulp.
    (sigma + sigma.transpose()) * 0.5
}

/// Ordered collection of splats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian3D>,
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        Self { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.gaussians.iter().map(|g| g.label).collect()
    }

    pub fn with_labels(&self, labels: &[Label]) -> Result<Scene> {
        if labels.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} Gaussians",
                labels.len(),
                self.len()
            )));
        }
        let gaussians = self
            .gaussians
            .iter()
            .zip(labels)
            .map(|(g, &l)| g.clone().with_label(l))
            .collect();
        Ok(Scene { gaussians })
    }

    pub fn validate(&self) -> Result<()> {
        self.gaussians.iter().try_for_each(Gaussian3D::validate)
    }

    /// Axis-aligned bounds of every splat's `sigmas`-standard-deviation box.
    pub fn bounds(&self, sigmas: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut it = self.gaussians.iter().map(|g| {
            let cov = covariance_unchecked(&g.scale, &g.rotation, 0.0);
            let half = Vector3::new(cov[(0, 0)], cov[(1, 1)], cov[(2, 2)]).map(|v| sigmas * v.sqrt());
            (g.center - half, g.center + half)
        });
        let first = it.next()?;
        Some(it.fold(first, |(lo, hi), (a, b)| (lo.inf(&a), hi.sup(&b))))
    }
}

/// Calibrated pinhole camera. Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Rigid world-to-camera transform.
    pub world_to_camera: Matrix4<f64>,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: Matrix4<f64>,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` roughly opposite to image y.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("eye coincides with target".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("up vector parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        let mut w2c = Matrix4::identity();
        w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            w2c,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("zero image resolution".into()));
        }
        let r = self.rotation();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !(err <= ROTATION_ORTHO_TOL) {
            return Err(Error::InvalidParameter(format!(
                "world_to_camera rotation is not orthonormal (max deviation {err:e})"
            )));
        }
        let last = self.world_to_camera.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidParameter(
                "world_to_camera bottom row must be (0, 0, 0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_camera_frame(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}
