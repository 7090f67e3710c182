//! Top-k feature registration: per-pixel mask embeddings are lifted onto the
//! splats that dominate each pixel's ray, then averaged per splat.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{Camera, Scene};
use crate::pq::PQCodebook;
use crate::raster::{topk_select, PreparedView, RasterConfig};

/// Unit-norm tolerance for embeddings.
pub const UNIT_NORM_TOL: f64 = 1e-5;

/// One training view: camera plus a per-pixel mask id grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskView {
    pub camera: Camera,
    /// Row-major `height × width` grid of local mask ids; 0 means unmasked.
    pub mask_map: Vec<u32>,
    /// Local mask id → row of the dataset's embedding matrix.
    pub mask_table: BTreeMap<u32, u32>,
}

impl MaskView {
    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    /// Global mask index covering pixel `(x, y)`, if any. No bounds check.
    #[inline]
    fn mask_at_unchecked(&self, x: u32, y: u32) -> Option<usize> {
        let id = self.mask_map[y as usize * self.camera.width as usize + x as usize];
        if id == 0 {
            None
        } else {
            self.mask_table.get(&id).map(|&g| g as usize)
        }
    }
}

/// Views with disjoint per-image masks and one embedding per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDataset {
    pub views: Vec<MaskView>,
    /// Row-major `M × dim` matrix of unit embeddings.
    pub embeddings: Vec<f32>,
    pub dim: usize,
}

impl MaskDataset {
    pub fn new(views: Vec<MaskView>, embeddings: Vec<f32>, dim: usize) -> Result<Self> {
        let ds = Self {
            views,
            embeddings,
            dim,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn mask_count(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.embeddings.len() / self.dim
        }
    }

    pub fn embedding(&self, j: usize) -> &[f32] {
        &self.embeddings[j * self.dim..(j + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.embeddings.len() % self.dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding buffer of {} floats is not a multiple of dim {}",
                self.embeddings.len(),
                self.dim
            )));
        }
        let m = self.mask_count();
        for (j, e) in self.embeddings.chunks_exact(self.dim).enumerate() {
            let n = norm(e);
            if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(Error::InvalidArgument(format!(
                    "mask embedding {j} has norm {n}, expected unit"
                )));
            }
        }
        let mut owner = vec![None; m];
        for (v, view) in self.views.iter().enumerate() {
            view.camera.validate()?;
            if view.mask_map.len() != view.camera.pixel_count() {
                return Err(Error::InvalidArgument(format!(
                    "view {v}: mask map has {} entries for a {}x{} image",
                    view.mask_map.len(),
                    view.camera.width,
                    view.camera.height
                )));
            }
            for (&local, &global) in &view.mask_table {
                if local == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "view {v}: mask id 0 is reserved for unmasked pixels"
                    )));
                }
                let slot = owner.get_mut(global as usize).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "view {v}: mask {local} points at embedding {global}, only {m} exist"
                    ))
                })?;
                if let Some((ov, ol)) = *slot {
                    return Err(Error::InvalidArgument(format!(
                        "embedding {global} is shared by view {ov} mask {ol} and view {v} mask {local}"
                    )));
                }
                *slot = Some((v, local));
            }
            if let Some(&id) = view
                .mask_map
                .iter()
                .find(|&&id| id != 0 && !view.mask_table.contains_key(&id))
            {
                return Err(Error::InvalidArgument(format!(
                    "view {v}: mask id {id} has no table entry"
                )));
            }
        }
        Ok(())
    }

    /// Embedding of the mask covering pixel `(x, y)` of `view`.
    pub fn pixel_embedding(&self, view: usize, x: u32, y: u32) -> Result<Option<&[f32]>> {
        Ok(self.mask_at(view, x, y)?.map(|j| self.embedding(j)))
    }

    /// Global mask index covering pixel `(x, y)` of `view`.
    pub fn mask_at(&self, view: usize, x: u32, y: u32) -> Result<Option<usize>> {
        let v = self
            .views
            .get(view)
            .ok_or_else(|| Error::InvalidArgument(format!("view {view} out of range")))?;
        if x >= v.width() || y >= v.height() {
            return Err(Error::InvalidArgument(format!(
                "pixel ({x}, {y}) outside {}x{} image",
                v.width(),
                v.height()
            )));
        }
        Ok(v.mask_at_unchecked(x, y))
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Sparse nonnegative Gaussian × mask weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<BTreeMap<usize, f64>>,
    mask_count: usize,
}

impl WeightMatrix {
    pub fn new(gaussian_count: usize, mask_count: usize) -> Self {
        Self {
            rows: vec![BTreeMap::new(); gaussian_count],
            mask_count,
        }
    }

    pub fn gaussian_count(&self) -> usize {
        self.rows.len()
    }

    pub fn mask_count(&self) -> usize {
        self.mask_count
    }

    pub fn add(&mut self, gaussian: usize, mask: usize, w: f64) {
        debug_assert!(w >= 0.0 && w.is_finite());
        debug_assert!(mask < self.mask_count);
        *self.rows[gaussian].entry(mask).or_insert(0.0) += w;
    }

    pub fn get(&self, gaussian: usize, mask: usize) -> f64 {
        self.rows[gaussian].get(&mask).copied().unwrap_or(0.0)
    }

    pub fn row(&self, gaussian: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[gaussian].iter().map(|(&j, &w)| (j, w))
    }

    pub fn row_sum(&self, gaussian: usize) -> f64 {
        self.rows[gaussian].values().sum()
    }

    /// Nonzero entries in (gaussian, mask) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |(&j, &w)| (i, j, w)))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    /// Adds `other` entry-wise, in (gaussian, mask) order.
    pub fn merge(&mut self, other: &WeightMatrix) {
        for (i, j, w) in other.entries() {
            self.add(i, j, w);
        }
    }
}

fn accumulate_view(
    view: &MaskView,
    prepared: &PreparedView,
    k: usize,
    out: &mut WeightMatrix,
) {
    for y in 0..view.height() {
        for x in 0..view.width() {
            let Some(mask) = view.mask_at_unchecked(x, y) else {
                continue;
            };
            let composite = prepared.composite_pixel_center(x, y);
            for c in topk_select(&composite.contributions, k) {
                out.add(c.gaussian_index, mask, c.weight);
            }
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    Ok(())
}

/// Sum Top-k compositing weights into (Gaussian, mask) entries.
///
/// Visits views in order and pixels row-major, adding directly into one
/// matrix; the result is bitwise reproducible.
pub fn accumulate_weights(
    scene: &Scene,
    ds: &MaskDataset,
    k: usize,
    cfg: &RasterConfig,
) -> Result<WeightMatrix> {
    check_k(k)?;
    let mut w = WeightMatrix::new(scene.len(), ds.mask_count());
    for view in &ds.views {
        let prepared = PreparedView::new(scene, &view.camera, cfg)?;
        accumulate_view(view, &prepared, k, &mut w);
    }
    Ok(w)
}

/// Parallel variant: one private matrix per view, merged in view order.
///
/// Matches [`accumulate_weights`] up to floating-point reassociation.
pub fn accumulate_weights_parallel(
    scene: &Scene,
    ds: &MaskDataset,
    k: usize,
    cfg: &RasterConfig,
) -> Result<WeightMatrix> {
    check_k(k)?;
    let partials = ds
        .views
        .par_iter()
        .map(|view| {
            let prepared = PreparedView::new(scene, &view.camera, cfg)?;
            let mut w = WeightMatrix::new(scene.len(), ds.mask_count());
            accumulate_view(view, &prepared, k, &mut w);
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = WeightMatrix::new(scene.len(), ds.mask_count());
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

/// Per-Gaussian aggregated embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub dim: usize,
    /// Unit embedding per Gaussian, `None` when unassigned.
    pub features: Vec<Option<Vec<f32>>>,
    /// Gaussians whose weighted mean cancelled to the zero vector.
    pub cancelled: Vec<usize>,
}

impl Aggregation {
    pub fn assigned_count(&self) -> usize {
        self.features.iter().filter(|f| f.is_some()).count()
    }
}

/// Weighted average of mask embeddings per Gaussian, L2-normalized.
pub fn aggregate_features(w: &WeightMatrix, embeddings: &[f32], dim: usize) -> Result<Aggregation> {
    if dim == 0 || embeddings.len() != w.mask_count() * dim {
        return Err(Error::InvalidArgument(format!(
            "embedding matrix of {} floats does not match {} masks of dim {dim}",
            embeddings.len(),
            w.mask_count()
        )));
    }
    let mut features = Vec::with_capacity(w.gaussian_count());
    let mut cancelled = Vec::new();
    let mut acc = vec![0.0f64; dim];
    for i in 0..w.gaussian_count() {
        let total = w.row_sum(i);
        if !(total > 0.0) {
            features.push(None);
            continue;
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (j, wij) in w.row(i) {
            let c = wij / total;
            let e = &embeddings[j * dim..(j + 1) * dim];
            for (a, &x) in acc.iter_mut().zip(e) {
                *a += c * x as f64;
            }
        }
        let n = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(n > 0.0) {
            warn!("aggregated embedding of Gaussian {i} cancelled to zero; leaving it unassigned");
            cancelled.push(i);
            features.push(None);
            continue;
        }
        features.push(Some(acc.iter().map(|a| (a / n) as f32).collect()));
    }
    Ok(Aggregation {
        dim,
        features,
        cancelled,
    })
}

/// Per-Gaussian embedding storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Row-major `N × dim` full-precision unit vectors.
    Full { dim: usize, data: Vec<f32> },
    /// Row-major `N × subspaces` PQ codes.
    Quantized {
        dim: usize,
        subspaces: usize,
        codes: Vec<u8>,
    },
}

impl Features {
    pub fn dim(&self) -> usize {
        match self {
            Features::Full { dim, .. } | Features::Quantized { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Features::Full { dim, data } => data.len() / dim,
            Features::Quantized {
                subspaces, codes, ..
            } => codes.len() / subspaces,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bytes of feature payload stored per Gaussian.
    pub fn bytes_per_gaussian(&self) -> usize {
        match self {
            Features::Full { dim, .. } => dim * std::mem::size_of::<f32>(),
            Features::Quantized { subspaces, .. } => *subspaces,
        }
    }

    pub fn full_row(&self, i: usize) -> Option<&[f32]> {
        match self {
            Features::Full { dim, data } => Some(&data[i * dim..(i + 1) * dim]),
            Features::Quantized { .. } => None,
        }
    }

    pub fn code(&self, i: usize) -> Option<&[u8]> {
        match self {
            Features::Quantized {
                subspaces, codes, ..
            } => Some(&codes[i * subspaces..(i + 1) * subspaces]),
            Features::Full { .. } => None,
        }
    }
}

/// Splats that received any weight, with their registered features.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredScene {
    pub scene: Scene,
    pub features: Features,
    /// Original index → index in `scene`, `None` for pruned splats.
    pub survivor_map: Vec<Option<usize>>,
}

impl RegisteredScene {
    pub fn len(&self) -> usize {
        self.scene.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scene.is_empty()
    }

    /// Original indices of the surviving splats, in order.
    pub fn kept_indices(&self) -> Vec<usize> {
        self.survivor_map
            .iter()
            .enumerate()
            .filter_map(|(orig, new)| new.map(|_| orig))
            .collect()
    }

    /// Replace full-precision features by PQ codes.
    pub fn quantize(&self, cb: &PQCodebook) -> Result<RegisteredScene> {
        let Features::Full { dim, data } = &self.features else {
            return Ok(self.clone());
        };
        if *dim != cb.dim() {
            return Err(Error::InvalidArgument(format!(
                "features have dim {dim}, codebook expects {}",
                cb.dim()
            )));
        }
        let codes = cb.encode_batch(data)?;
        Ok(RegisteredScene {
            scene: self.scene.clone(),
            features: Features::Quantized {
                dim: *dim,
                subspaces: cb.subspaces(),
                codes,
            },
            survivor_map: self.survivor_map.clone(),
        })
    }
}

/// Drop every splat without an aggregated feature.
pub fn prune_unassigned(scene: &Scene, agg: &Aggregation) -> Result<RegisteredScene> {
    if agg.features.len() != scene.len() {
        return Err(Error::InvalidArgument(format!(
            "{} features for {} Gaussians",
            agg.features.len(),
            scene.len()
        )));
    }
    let mut gaussians = Vec::new();
    let mut data = Vec::new();
    let mut survivor_map = Vec::with_capacity(scene.len());
    for (g, f) in scene.gaussians.iter().zip(&agg.features) {
        match f {
            Some(f) => {
                survivor_map.push(Some(gaussians.len()));
                gaussians.push(g.clone());
                data.extend_from_slice(f);
            }
            None => survivor_map.push(None),
        }
    }
    if gaussians.is_empty() {
        return Err(Error::EmptyScene);
    }
    Ok(RegisteredScene {
        scene: Scene::new(gaussians),
        features: Features::Full {
            dim: agg.dim,
            data,
        },
        survivor_map,
    })
}

/// Registration knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    pub top_k: usize,
    pub raster: RasterConfig,
    /// Use the per-view parallel accumulator.
    pub parallel: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            top_k: 20,
            raster: RasterConfig::default(),
            parallel: false,
        }
    }
}

/// Accumulate, aggregate and prune in one go.
pub fn register(
    scene: &Scene,
    ds: &MaskDataset,
    cfg: &RegistrationConfig,
) -> Result<(RegisteredScene, WeightMatrix)> {
    let w = if cfg.parallel {
        accumulate_weights_parallel(scene, ds, cfg.top_k, &cfg.raster)?
    } else {
        accumulate_weights(scene, ds, cfg.top_k, &cfg.raster)?
    };
    let agg = aggregate_features(&w, &ds.embeddings, ds.dim)?;
    let rs = prune_unassigned(scene, &agg)?;
    Ok((rs, w))
}

#[cfg(test)]
mod tests {
    use nalgebra::{Matrix4, Vector3};

    use super::*;
    use crate::gaussian::Gaussian3D;

    fn camera(w: u32, h: u32) -> Camera {
        Camera::new(20.0, 20.0, w as f64 / 2.0, h as f64 / 2.0, w, h, Matrix4::identity()).unwrap()
    }

    fn unit(dim: usize, axis: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    /// One view whose mask map is built from `ids`, each local id mapping to
    /// embedding `id - 1`.
    fn single_view(w: u32, h: u32, ids: Vec<u32>, embeddings: Vec<f32>, dim: usize) -> MaskDataset {
        let table = ids
            .iter()
            .filter(|&&i| i != 0)
            .map(|&i| (i, i - 1))
            .collect();
        MaskDataset::new(
            vec![MaskView {
                camera: camera(w, h),
                mask_map: ids,
                mask_table: table,
            }],
            embeddings,
            dim,
        )
        .unwrap()
    }

    #[test]
    fn pixel_embedding_lookup() {
        let mut emb = unit(4, 0);
        emb.extend(unit(4, 1));
        emb.extend(unit(4, 2));
        let ds = single_view(2, 2, vec![0, 3, 1, 3], emb, 4);
        assert_eq!(ds.pixel_embedding(0, 1, 0).unwrap(), Some(&unit(4, 2)[..]));
        assert_eq!(ds.pixel_embedding(0, 0, 1).unwrap(), Some(&unit(4, 0)[..]));
        assert_eq!(ds.pixel_embedding(0, 0, 0).unwrap(), None);
        assert!(matches!(
            ds.pixel_embedding(0, 2, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(ds.pixel_embedding(1, 0, 0).is_err());
    }

    #[test]
    fn one_mask_image_is_constant() {
        let ds = single_view(3, 3, vec![1; 9], unit(3, 1), 3);
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(ds.pixel_embedding(0, x, y).unwrap(), Some(&unit(3, 1)[..]));
            }
        }
    }

    #[test]
    fn dataset_validation() {
        let view = MaskView {
            camera: camera(2, 1),
            mask_map: vec![1, 2],
            mask_table: [(1, 0)].into_iter().collect(),
        };
        assert!(MaskDataset::new(vec![view.clone()], unit(2, 0), 2).is_err());
        // Non-unit embedding.
        let ok_view = MaskView {
            mask_map: vec![1, 0],
            ..view
        };
        assert!(MaskDataset::new(vec![ok_view.clone()], vec![0.5, 0.5], 2).is_err());
        // The same embedding may not back masks of two views.
        assert!(MaskDataset::new(vec![ok_view.clone(), ok_view], unit(2, 0), 2).is_err());
    }

    #[test]
    fn single_gaussian_single_pixel_weight() {
        // Gaussian at 1 unit, centered on pixel (0, 0)'s center.
        let cam = camera(1, 1);
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 0.1, 0.7);
        let scene = Scene::new(vec![g]);
        let ds = MaskDataset::new(
            vec![MaskView {
                camera: cam,
                mask_map: vec![1],
                mask_table: [(1, 0)].into_iter().collect(),
            }],
            unit(2, 0),
            2,
        )
        .unwrap();
        let w = accumulate_weights(&scene, &ds, 20, &RasterConfig::default()).unwrap();
        assert!((w.get(0, 0) - 0.7).abs() < 1e-15);
        assert_eq!(w.nnz(), 1);
    }

    #[test]
    fn top1_keeps_only_dominant_gaussian() {
        let cam = camera(1, 1);
        let scene = Scene::new(vec![
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.1, 0.5),
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 0.1, 0.8),
        ]);
        let ds = MaskDataset::new(
            vec![MaskView {
                camera: cam,
                mask_map: vec![1],
                mask_table: [(1, 0)].into_iter().collect(),
            }],
            unit(2, 0),
            2,
        )
        .unwrap();
        let w1 = accumulate_weights(&scene, &ds, 1, &RasterConfig::default()).unwrap();
        assert_eq!(w1.get(1, 0), 0.8);
        assert_eq!(w1.get(0, 0), 0.0);
        let w2 = accumulate_weights(&scene, &ds, 2, &RasterConfig::default()).unwrap();
        assert!((w2.get(0, 0) - 0.2 * 0.5).abs() < 1e-15);
        assert!(accumulate_weights(&scene, &ds, 0, &RasterConfig::default()).is_err());
    }

    #[test]
    fn two_views_sum() {
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 0.1, 0.6);
        let scene = Scene::new(vec![g]);
        let mut far = Matrix4::identity();
        far[(2, 3)] = 1.0; // Gaussian now at depth 2.
        let view = |m: Matrix4<f64>, id: u32, global: u32| MaskView {
            camera: Camera::new(20.0, 20.0, 0.5, 0.5, 1, 1, m).unwrap(),
            mask_map: vec![id],
            mask_table: [(id, global)].into_iter().collect(),
        };
        let mut emb = unit(2, 0);
        emb.extend(unit(2, 1));
        let ds = MaskDataset::new(
            vec![view(Matrix4::identity(), 1, 0), view(far, 1, 1)],
            emb,
            2,
        )
        .unwrap();
        let w = accumulate_weights(&scene, &ds, 5, &RasterConfig::default()).unwrap();
        // Both views see the splat dead-center: alpha = opacity in each.
        assert_eq!(w.get(0, 0), 0.6);
        assert_eq!(w.get(0, 1), 0.6);
        assert_eq!(w.row_sum(0), 1.2);
    }

    fn weights(rows: &[&[(usize, f64)]], masks: usize) -> WeightMatrix {
        let mut w = WeightMatrix::new(rows.len(), masks);
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in *r {
                w.add(i, j, v);
            }
        }
        w
    }

    #[test]
    fn aggregation_cases() {
        let s = std::f32::consts::FRAC_1_SQRT_2;
        let emb = [1.0, 0.0, 0.0, 1.0, s, s, -1.0, 0.0];
        let w = weights(
            &[
                &[(0, 1.0)],
                &[(0, 1.0), (1, 1.0)],
                &[(0, 3.0), (2, 1.0)],
                &[],
                &[(0, 2.0), (3, 2.0)],
            ],
            4,
        );
        let agg = aggregate_features(&w, &emb, 2).unwrap();
        assert_eq!(agg.features[0].as_deref(), Some(&[1.0f32, 0.0][..]));

        let f1 = agg.features[1].as_ref().unwrap();
        assert!((f1[0] - s).abs() < 1e-7 && (f1[1] - s).abs() < 1e-7);

        // normalize(0.75·a + 0.25·b)
        let raw = [0.75 + 0.25 * s as f64, 0.25 * s as f64];
        let n = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        let f2 = agg.features[2].as_ref().unwrap();
        assert!((f2[0] as f64 - raw[0] / n).abs() < 1e-7);
        assert!((f2[1] as f64 - raw[1] / n).abs() < 1e-7);

        assert!(agg.features[3].is_none());
        // Opposite embeddings with equal weight cancel exactly.
        assert!(agg.features[4].is_none());
        assert_eq!(agg.cancelled, vec![4]);
        assert_eq!(agg.assigned_count(), 3);
    }

    #[test]
    fn pruning() {
        let scene = Scene::new(
            (0..5)
                .map(|i| Gaussian3D::isotropic(Vector3::new(i as f64, 0.0, 1.0), 0.1, 0.5))
                .collect(),
        );
        let some = || Some(vec![1.0f32, 0.0]);
        let agg = Aggregation {
            dim: 2,
            features: vec![some(), None, some(), None, some()],
            cancelled: vec![],
        };
        let rs = prune_unassigned(&scene, &agg).unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs.survivor_map, vec![Some(0), None, Some(1), None, Some(2)]);
        assert_eq!(rs.kept_indices(), vec![0, 2, 4]);
        assert_eq!(rs.scene.gaussians[1].center.x, 2.0);

        let all = Aggregation {
            dim: 2,
            features: vec![some(); 5],
            cancelled: vec![],
        };
        let rs = prune_unassigned(&scene, &all).unwrap();
        assert_eq!(rs.survivor_map, (0..5).map(Some).collect::<Vec<_>>());

        let none = Aggregation {
            dim: 2,
            features: vec![None; 5],
            cancelled: vec![],
        };
        assert!(matches!(prune_unassigned(&scene, &none), Err(Error::EmptyScene)));
    }
}
