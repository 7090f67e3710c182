//! Seeded synthetic scenes, label embeddings and mask datasets with exact
//! ground truth.

use std::collections::BTreeMap;

use nalgebra::{Quaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::LabeledPointCloud;
use crate::gaussian::{Camera, Gaussian3D, Scene};
use crate::raster::{topk_select, PreparedView, RasterConfig};
use crate::registration::{MaskDataset, MaskView};

/// Largest allowed cosine between two label embeddings (a 60° minimum angle).
pub const MAX_LABEL_COSINE: f64 = 0.5;
pub const MAX_EMBEDDING_RESAMPLES: usize = 1000;

const STREAM_GEOMETRY: u64 = 0;
const STREAM_EMBEDDINGS: u64 = 1;
const STREAM_POINTS: u64 = 2;
const STREAM_MASK_NOISE: u64 = 1 << 32;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Where splats are placed: one cluster per label on a horizontal circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutSpec {
    pub cluster_radius: f64,
    /// Standard deviation of splat centers around their cluster center.
    pub cluster_spread: f64,
    /// Per-axis scales are log-uniform in `[scale_min, scale_max]`.
    pub scale_min: f64,
    pub scale_max: f64,
    pub opacity_min: f64,
    pub opacity_max: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            cluster_radius: 1.5,
            cluster_spread: 0.3,
            scale_min: 0.03,
            scale_max: 0.15,
            opacity_min: 0.3,
            opacity_max: 0.95,
        }
    }
}

/// A ring of cameras around the vertical axis, all looking at `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    pub views: usize,
    pub radius: f64,
    pub elevation: f64,
    pub target: [f64; 3],
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            views: 8,
            radius: 5.0,
            elevation: 2.5,
            target: [0.0; 3],
            width: 128,
            height: 128,
            focal: 128.0,
        }
    }
}

impl RigSpec {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::Spec("rig needs at least one view".into()));
        }
        if !(self.radius > 0.0 && self.focal > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Spec("rig radius, focal and resolution must be positive".into()));
        }
        Ok(())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        self.validate()?;
        let target = Vector3::from(self.target);
        (0..self.views)
            .map(|v| {
                let a = std::f64::consts::TAU * v as f64 / self.views as f64;
                let eye = target
                    + Vector3::new(self.radius * a.cos(), self.radius * a.sin(), self.elevation);
                Camera::look_at(
                    eye,
                    target,
                    Vector3::z(),
                    self.focal,
                    self.width,
                    self.height,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub gaussian_count: usize,
    pub label_count: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Per-coordinate standard deviation of the noise added to mask embeddings.
    pub noise_sigma: f64,
    pub points_per_gaussian: usize,
    pub layout: LayoutSpec,
    pub rig: RigSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            gaussian_count: 200,
            label_count: 4,
            dim: 512,
            noise_sigma: 0.05,
            points_per_gaussian: 20,
            layout: LayoutSpec::default(),
            rig: RigSpec::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.label_count == 0 || self.label_count > self.gaussian_count {
            return Err(Error::Spec(format!(
                "label_count must be in [1, gaussian_count], got {} for {} Gaussians",
                self.label_count, self.gaussian_count
            )));
        }
        if self.dim == 0 {
            return Err(Error::Spec("embedding dimension must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Spec(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        let l = &self.layout;
        if !(0.0 < l.scale_min && l.scale_min <= l.scale_max && l.cluster_spread >= 0.0) {
            return Err(Error::Spec("invalid scale range or spread".into()));
        }
        if !(0.0 <= l.opacity_min && l.opacity_min <= l.opacity_max && l.opacity_max <= 1.0) {
            return Err(Error::Spec("opacity range must lie in [0, 1]".into()));
        }
        self.rig.validate()
    }
}

/// Generated scene with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub scene: Scene,
    /// Row-major `label_count × dim` unit vectors.
    pub label_embeddings: Vec<f32>,
    pub dim: usize,
    pub points: LabeledPointCloud,
}

impl SyntheticScene {
    pub fn label_count(&self) -> usize {
        self.label_embeddings.len() / self.dim
    }

    pub fn label_embedding(&self, l: usize) -> &[f32] {
        &self.label_embeddings[l * self.dim..(l + 1) * self.dim]
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f32>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| (x / n) as f32).collect())
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `n` random unit vectors of dimension `dim`, row-major.
pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).flat_map(|_| random_unit(&mut rng, dim)).collect()
}

/// Unit label embeddings with pairwise cosine at most [`MAX_LABEL_COSINE`].
pub fn label_embeddings(label_count: usize, dim: usize, seed: u64) -> Result<Vec<f32>> {
    let mut rng = stream_rng(seed, STREAM_EMBEDDINGS);
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(label_count);
    let mut resamples = 0;
    while rows.len() < label_count {
        let c = random_unit(&mut rng, dim);
        if rows.iter().all(|r| cosine(r, &c) <= MAX_LABEL_COSINE) {
            rows.push(c);
            continue;
        }
        resamples += 1;
        if resamples > MAX_EMBEDDING_RESAMPLES {
            return Err(Error::Spec(format!(
                "could not place {label_count} labels 60° apart in {dim} dimensions"
            )));
        }
    }
    Ok(rows.concat())
}

fn random_rotation(rng: &mut impl Rng) -> Quaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = q.norm();
        if n > 1e-6 {
            return q / n;
        }
    }
}

fn cluster_center(spec: &SceneSpec, label: usize) -> Vector3<f64> {
    if spec.label_count == 1 {
        return Vector3::zeros();
    }
    let a = std::f64::consts::TAU * label as f64 / spec.label_count as f64;
    let r = spec.layout.cluster_radius;
    Vector3::new(r * a.cos(), r * a.sin(), 0.0)
}

/// Labeled splats clustered by label, label embeddings and a labeled point
/// cloud sampled from the splats.
pub fn gen_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let lay = &spec.layout;
    let mut rng = stream_rng(spec.seed, STREAM_GEOMETRY);
    let (ln_lo, ln_hi) = (lay.scale_min.ln(), lay.scale_max.ln());
    let gaussians: Vec<Gaussian3D> = (0..spec.gaussian_count)
        .map(|i| {
            let label = i % spec.label_count;
            let offset = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let center = cluster_center(spec, label) + lay.cluster_spread * offset;
            let scale = Vector3::from_fn(|_, _| rng.random_range(ln_lo..=ln_hi).exp());
            let rotation = random_rotation(&mut rng);
            let opacity = rng.random_range(lay.opacity_min..=lay.opacity_max);
            let color = Vector3::from_fn(|_, _| rng.random::<f64>());
            Gaussian3D {
                center,
                scale,
                rotation,
                opacity,
                color,
                label: Some(label as u32),
            }
        })
        .collect();
    let scene = Scene::new(gaussians);
    let label_embeddings = label_embeddings(spec.label_count, spec.dim, spec.seed)?;

    let mut rng = stream_rng(spec.seed, STREAM_POINTS);
    let mut points = Vec::with_capacity(spec.gaussian_count * spec.points_per_gaussian);
    let mut labels = Vec::with_capacity(points.capacity());
    for g in &scene.gaussians {
        let r = g.rotation_matrix();
        for _ in 0..spec.points_per_gaussian {
            let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            points.push(g.center + r * g.scale.component_mul(&z));
            labels.push(g.label.unwrap_or(0));
        }
    }
    let points = LabeledPointCloud::new(points, labels, spec.label_count as u32)
        .map_err(|e| Error::Spec(e.to_string()))?;
    Ok(SyntheticScene {
        scene,
        label_embeddings,
        dim: spec.dim,
        points,
    })
}

/// Per-view masks from the label of each pixel's highest-weight splat, with
/// one noisy embedding per (view, label).
pub fn render_masks(
    scene: &Scene,
    label_embeddings: &[f32],
    dim: usize,
    cameras: &[Camera],
    sigma: f64,
    seed: u64,
) -> Result<MaskDataset> {
    if dim == 0 || label_embeddings.len() % dim != 0 {
        return Err(Error::InvalidArgument("label embedding matrix does not match dim".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let label_count = label_embeddings.len() / dim;
    if let Some(l) = scene
        .gaussians
        .iter()
        .filter_map(|g| g.label)
        .find(|&l| l as usize >= label_count)
    {
        return Err(Error::InvalidArgument(format!(
            "scene label {l} has no embedding ({label_count} given)"
        )));
    }
    let cfg = RasterConfig::default();
    let label_maps = cameras
        .par_iter()
        .map(|cam| {
            let view = PreparedView::new(scene, cam, &cfg)?;
            let mut map = Vec::with_capacity(cam.pixel_count());
            for y in 0..cam.height {
                for x in 0..cam.width {
                    let c = view.composite_pixel_center(x, y);
                    let id = topk_select(&c.contributions, 1)
                        .first()
                        .and_then(|top| scene.gaussians[top.gaussian_index].label)
                        .map_or(0, |l| l + 1);
                    map.push(id);
                }
            }
            Ok(map)
        })
        .collect::<Result<Vec<Vec<u32>>>>()?;

    let mut embeddings = Vec::new();
    let mut views = Vec::with_capacity(cameras.len());
    let mut next = 0u32;
    for (v, (cam, map)) in cameras.iter().zip(label_maps).enumerate() {
        let mut present = vec![false; label_count];
        for &id in map.iter().filter(|&&id| id != 0) {
            present[id as usize - 1] = true;
        }
        let mut rng = stream_rng(seed, STREAM_MASK_NOISE + v as u64);
        let mut table = BTreeMap::new();
        for l in (0..label_count).filter(|&l| present[l]) {
            let base = &label_embeddings[l * dim..(l + 1) * dim];
            if sigma == 0.0 {
                embeddings.extend_from_slice(base);
            } else {
                let noisy: Vec<f64> = base
                    .iter()
                    .map(|&b| b as f64 + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let e = normalized(&noisy).ok_or_else(|| {
                    Error::NumericalDegeneracy("noisy mask embedding has zero norm".into())
                })?;
                embeddings.extend_from_slice(&e);
            }
            table.insert(l as u32 + 1, next);
            next += 1;
        }
        views.push(MaskView {
            camera: cam.clone(),
            mask_map: map,
            mask_table: table,
        });
    }
    MaskDataset::new(views, embeddings, dim)
}
