use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::iou::{report_from, IouReport, UndefinedIou};
use super::pseudo::GaussianKernel;
use crate::error::{Error, Result};
use crate::gaussian::{Label, Scene};
use crate::raster::RasterConfig;

pub const DEFAULT_CELL_BUDGET: usize = 10_000_000;
/// Default spacing is the bounding-box diagonal over this many cells.
pub const DEFAULT_DIAGONAL_DIVISIONS: f64 = 128.0;
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-4;

/// Densities below this are empty voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum DensityThreshold {
    /// Fraction of the grid's maximum density.
    Relative(f64),
    Absolute(f64),
}

impl Default for DensityThreshold {
    fn default() -> Self {
        DensityThreshold::Relative(DEFAULT_RELATIVE_THRESHOLD)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelConfig {
    /// `None` uses the bounding-box diagonal / 128.
    pub spacing: Option<f64>,
    pub threshold: DensityThreshold,
    pub cell_budget: usize,
    /// Squared Mahalanobis radius beyond which a splat contributes nothing.
    pub cutoff_sq: f64,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            spacing: None,
            threshold: DensityThreshold::default(),
            cell_budget: DEFAULT_CELL_BUDGET,
            cutoff_sq: RasterConfig::default().cutoff_sq,
        }
    }
}

/// Regular grid of voxel centers with per-label scores.
///
/// Cells are stored x-fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vector3<f64>,
    pub spacing: f64,
    pub dims: [usize; 3],
    pub label_count: usize,
    /// `cell_count × label_count`, row per cell.
    pub scores: Vec<f64>,
    pub density: Vec<f64>,
    pub labels: Vec<Label>,
}

impl VoxelGrid {
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Vector3<f64> {
        voxel_center(&self.origin, self.spacing, [ix, iy, iz])
    }

    pub fn cell_scores(&self, cell: usize) -> &[f64] {
        &self.scores[cell * self.label_count..(cell + 1) * self.label_count]
    }

    pub fn occupied(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn same_geometry(&self, other: &VoxelGrid) -> bool {
        self.origin == other.origin
            && self.spacing == other.spacing
            && self.dims == other.dims
            && self.label_count == other.label_count
    }
}

fn voxel_center(origin: &Vector3<f64>, spacing: f64, idx: [usize; 3]) -> Vector3<f64> {
    Vector3::new(
        origin.x + spacing * (idx[0] as f64 + 0.5),
        origin.y + spacing * (idx[1] as f64 + 0.5),
        origin.z + spacing * (idx[2] as f64 + 0.5),
    )
}

/// `α·N(p)` inside the cutoff, `None` beyond it.
#[inline]
fn contribution(k: &GaussianKernel, opacity: f64, p: &Vector3<f64>, cutoff_sq: f64) -> Option<f64> {
    let m = k.mahalanobis(p);
    (m <= cutoff_sq).then(|| opacity * ((-0.5 * m).exp() / k.normalizer))
}

struct LabeledKernel {
    label: usize,
    opacity: f64,
    kernel: GaussianKernel,
}

fn labeled_kernels(scene: &Scene, label_count: usize) -> Result<Vec<LabeledKernel>> {
    scene
        .gaussians
        .iter()
        .filter_map(|g| g.label.map(|l| (g, l as usize)))
        .map(|(g, label)| {
            if label >= label_count {
                return Err(Error::InvalidArgument(format!(
                    "label {label} outside [0, {label_count})"
                )));
            }
            Ok(LabeledKernel {
                label,
                opacity: g.opacity,
                kernel: GaussianKernel::new(g)?,
            })
        })
        .collect()
}

/// Opacity-weighted density of each label at `v`. Unlabeled splats are ignored.
pub fn voxel_label_scores(
    v: &Vector3<f64>,
    scene: &Scene,
    label_count: usize,
    cutoff_sq: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; label_count];
    for k in labeled_kernels(scene, label_count)? {
        if let Some(c) = contribution(&k.kernel, k.opacity, v, cutoff_sq) {
            out[k.label] += c;
        }
    }
    Ok(out)
}

/// Axis-aligned box holding every splat out to `sigmas` standard deviations.
pub fn default_bounds(scene: &Scene, sigmas: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    scene.bounds(sigmas).ok_or(Error::EmptyScene)
}

fn axis_range(center: f64, extent: f64, origin: f64, spacing: f64, n: usize) -> Option<(usize, usize)> {
    // One cell of padding; the cutoff test decides membership.
    let lo = ((center - extent - origin) / spacing - 0.5).ceil() as i64 - 1;
    let hi = ((center + extent - origin) / spacing - 0.5).floor() as i64 + 1;
    let lo = lo.max(0);
    let hi = hi.min(n as i64 - 1);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Sample label scores on a grid covering `bounds` and label the voxels.
pub fn voxelize_scene(
    scene: &Scene,
    bounds: (Vector3<f64>, Vector3<f64>),
    label_count: usize,
    cfg: &VoxelConfig,
) -> Result<VoxelGrid> {
    let (lo, hi) = bounds;
    let extent = hi - lo;
    if !(extent.iter().all(|e| e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid bounds {lo:?} .. {hi:?}")));
    }
    let spacing = cfg
        .spacing
        .unwrap_or_else(|| extent.norm() / DEFAULT_DIAGONAL_DIVISIONS);
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidParameter(format!("voxel spacing must be > 0, got {spacing}")));
    }
    if label_count == 0 {
        return Err(Error::InvalidArgument("label_count must be >= 1".into()));
    }
    let mut dims = [0usize; 3];
    let mut cells: usize = 1;
    for (d, e) in dims.iter_mut().zip(extent.iter()) {
        let n = (e / spacing).ceil().max(1.0);
        if n > cfg.cell_budget as f64 {
            return Err(Error::ResourceLimit(format!(
                "grid axis of {n} cells exceeds the budget of {}",
                cfg.cell_budget
            )));
        }
        *d = n as usize;
        cells = cells.saturating_mul(*d);
    }
    if cells > cfg.cell_budget {
        return Err(Error::ResourceLimit(format!(
            "grid of {}x{}x{} = {cells} cells exceeds the budget of {}",
            dims[0], dims[1], dims[2], cfg.cell_budget
        )));
    }

    let kernels = labeled_kernels(scene, label_count)?;
    let ranges: Vec<Option<[(usize, usize); 3]>> = kernels
        .iter()
        .map(|k| {
            let mut r = [(0, 0); 3];
            for a in 0..3 {
                let e = (cfg.cutoff_sq * k.kernel.covariance[(a, a)]).sqrt();
                r[a] = axis_range(k.kernel.center[a], e, lo[a], spacing, dims[a])?;
            }
            Some(r)
        })
        .collect();

    let plane = dims[0] * dims[1];
    let mut scores = vec![0.0f64; cells * label_count];
    // Each z-plane is owned by one worker; within a voxel splats are summed
    // in index order, matching voxel_label_scores bit for bit.
    scores
        .par_chunks_mut(plane * label_count)
        .enumerate()
        .for_each(|(iz, out)| {
            for (k, r) in kernels.iter().zip(&ranges) {
                let Some([(x0, x1), (y0, y1), (z0, z1)]) = *r else {
                    continue;
                };
                if iz < z0 || iz > z1 {
                    continue;
                }
                for iy in y0..=y1 {
                    for ix in x0..=x1 {
                        let p = voxel_center(&lo, spacing, [ix, iy, iz]);
                        if let Some(c) = contribution(&k.kernel, k.opacity, &p, cfg.cutoff_sq) {
                            out[(iy * dims[0] + ix) * label_count + k.label] += c;
                        }
                    }
                }
            }
        });

    let density: Vec<f64> = scores.chunks_exact(label_count).map(|s| s.iter().sum()).collect();
    let threshold = match cfg.threshold {
        DensityThreshold::Absolute(t) => t,
        DensityThreshold::Relative(r) => r * density.iter().copied().fold(0.0, f64::max),
    };
    let labels = scores
        .chunks_exact(label_count)
        .zip(&density)
        .map(|(s, &p)| {
            if p > 0.0 && p >= threshold {
                let mut best = 0;
                for (l, &v) in s.iter().enumerate().skip(1) {
                    if v > s[best] {
                        best = l;
                    }
                }
                Some(best as u32)
            } else {
                None
            }
        })
        .collect();

    Ok(VoxelGrid {
        origin: lo,
        spacing,
        dims,
        label_count,
        scores,
        density,
        labels,
    })
}

fn check_geometry(gt: &VoxelGrid, pred: &VoxelGrid) -> Result<()> {
    if !gt.same_geometry(pred) {
        return Err(Error::InvalidArgument(
            "voxel grids differ in origin, spacing, dimensions or label count".into(),
        ));
    }
    Ok(())
}

/// Count-based IoU of one label; `None` when neither grid has it.
pub fn voxel_iou(gt: &VoxelGrid, pred: &VoxelGrid, label: u32) -> Result<Option<f64>> {
    check_geometry(gt, pred)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        let g = g == Some(label);
        let p = p == Some(label);
        inter += (g && p) as usize;
        union += (g || p) as usize;
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

pub fn voxel_miou(gt: &VoxelGrid, pred: &VoxelGrid, undefined: UndefinedIou) -> Result<IouReport> {
    check_geometry(gt, pred)?;
    let per_label = (0..gt.label_count as u32)
        .map(|l| voxel_iou(gt, pred, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from(per_label, undefined))
}
