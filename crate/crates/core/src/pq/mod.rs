//! Product quantization of embeddings.
//!
//! A `D`-dimensional vector is split into `L` contiguous sub-vectors of
//! `D / L` values; each sub-vector is replaced by the index of its nearest
//! centroid among `K ≤ 256` learned per sub-space, so a code is `L` bytes.

pub mod kmeans;
mod lut;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use self::kmeans::{KMeansConfig, KMeansResult};
pub use self::lut::{adc_score, build_query_lut, score_codes, NormMode, QueryLUT};
use crate::error::{Error, Result};

/// Centroids per sub-space for 8-bit codes.
pub const DEFAULT_CENTROIDS: usize = 256;

/// One PQ code: a centroid index per sub-space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PQCode(pub Vec<u8>);

impl PQCode {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// `L` sub-spaces × `K` centroids over `dim`-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PQCodebook {
    dim: usize,
    subspaces: usize,
    k: usize,
    /// Row-major `L × K × (dim / L)`.
    centroids: Vec<f32>,
    pub seed: u64,
    pub max_iterations: usize,
}

/// The RNG used for sub-space `l`; independent of evaluation order.
pub fn subspace_rng(seed: u64, subspace: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subspace as u64);
    rng
}

impl PQCodebook {
    pub fn from_centroids(
        dim: usize,
        subspaces: usize,
        k: usize,
        centroids: Vec<f32>,
        seed: u64,
    ) -> Result<Self> {
        check_geometry(dim, subspaces, k)?;
        if centroids.len() != dim * k {
            return Err(Error::InvalidArgument(format!(
                "expected {} centroid values, got {}",
                dim * k,
                centroids.len()
            )));
        }
        if let Some(i) = centroids.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("centroid value {i} is not finite")));
        }
        Ok(Self {
            dim,
            subspaces,
            k,
            centroids,
            seed,
            max_iterations: KMeansConfig::default().max_iterations,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn centroids_per_subspace(&self) -> usize {
        self.k
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.subspaces
    }

    pub fn centroid_data(&self) -> &[f32] {
        &self.centroids
    }

    #[inline]
    pub fn centroid(&self, subspace: usize, j: usize) -> &[f32] {
        let s = self.sub_dim();
        let off = (subspace * self.k + j) * s;
        &self.centroids[off..off + s]
    }

    /// Bytes per stored code over bytes of the `f32` vector.
    pub fn compression_ratio(&self) -> f64 {
        self.subspaces as f64 / (self.dim * std::mem::size_of::<f32>()) as f64
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::InvalidArgument(format!(
                "vector has dimension {len}, codebook expects {}",
                self.dim
            )));
        }
        Ok(())
    }

    fn check_code(&self, code: &[u8]) -> Result<()> {
        if code.len() != self.subspaces {
            return Err(Error::InvalidArgument(format!(
                "code has {} entries, codebook has {} sub-spaces",
                code.len(),
                self.subspaces
            )));
        }
        if let Some((l, &j)) = code.iter().enumerate().find(|(_, &j)| j as usize >= self.k) {
            return Err(Error::CorruptCode {
                subspace: l,
                index: j as usize,
                k: self.k,
            });
        }
        Ok(())
    }

    /// Nearest centroid per sub-space; ties go to the lower index.
    pub fn encode(&self, v: &[f32]) -> Result<PQCode> {
        self.check_dim(v.len())?;
        let s = self.sub_dim();
        let code = v
            .chunks_exact(s)
            .enumerate()
            .map(|(l, sub)| {
                let mut best = (0usize, f64::INFINITY);
                for j in 0..self.k {
                    let d: f64 = sub
                        .iter()
                        .zip(self.centroid(l, j))
                        .map(|(&a, &b)| {
                            let t = a as f64 - b as f64;
                            t * t
                        })
                        .sum();
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best.0 as u8
            })
            .collect();
        Ok(PQCode(code))
    }

    /// Encode a row-major batch of vectors into concatenated codes.
    pub fn encode_batch(&self, data: &[f32]) -> Result<Vec<u8>> {
        if data.len() % self.dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "batch of {} values is not a multiple of dim {}",
                data.len(),
                self.dim
            )));
        }
        let codes = data
            .par_chunks(self.dim)
            .map(|v| self.encode(v).map(|c| c.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(codes.concat())
    }

    /// Concatenation of the selected centroids.
    pub fn decode(&self, code: &[u8]) -> Result<Vec<f32>> {
        self.check_code(code)?;
        let mut out = Vec::with_capacity(self.dim);
        for (l, &j) in code.iter().enumerate() {
            out.extend_from_slice(self.centroid(l, j as usize));
        }
        Ok(out)
    }

    /// Symmetric table `‖c_li − c_lj‖²` for sub-space `l`, row-major `K × K`.
    pub fn pairwise_distance_table(&self, subspace: usize) -> Vec<f32> {
        let mut t = vec![0.0f32; self.k * self.k];
        for i in 0..self.k {
            for j in 0..self.k {
                t[i * self.k + j] = self
                    .centroid(subspace, i)
                    .iter()
                    .zip(self.centroid(subspace, j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        }
        t
    }

    /// Code-vs-code squared distance from the symmetric tables.
    pub fn symmetric_distance(&self, tables: &[Vec<f32>], a: &[u8], b: &[u8]) -> Result<f32> {
        self.check_code(a)?;
        self.check_code(b)?;
        if tables.len() != self.subspaces {
            return Err(Error::InvalidArgument("one table per sub-space expected".into()));
        }
        Ok(tables
            .iter()
            .zip(a.iter().zip(b))
            .map(|(t, (&i, &j))| t[i as usize * self.k + j as usize])
            .sum())
    }
}

fn check_geometry(dim: usize, subspaces: usize, k: usize) -> Result<()> {
    if subspaces == 0 || dim == 0 || dim % subspaces != 0 {
        return Err(Error::InvalidArgument(format!(
            "dimension {dim} is not divisible into {subspaces} sub-spaces"
        )));
    }
    if k == 0 || k > 256 {
        return Err(Error::InvalidArgument(format!(
            "centroid count {k} does not fit 8-bit codes"
        )));
    }
    Ok(())
}

/// Train one k-means codebook per sub-space of a row-major `n × dim` matrix.
///
/// Sub-spaces are independent problems with their own seeded RNG streams,
/// so the result does not depend on the thread count.
pub fn train_codebook(
    data: &[f32],
    dim: usize,
    subspaces: usize,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<PQCodebook> {
    check_geometry(dim, subspaces, k)?;
    if data.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "database of {} values is not a multiple of dim {dim}",
            data.len()
        )));
    }
    let n = data.len() / dim;
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    let s = dim / subspaces;
    let per_subspace = (0..subspaces)
        .into_par_iter()
        .map(|l| {
            let sub: Vec<f64> = data
                .chunks_exact(dim)
                .flat_map(|row| row[l * s..(l + 1) * s].iter().map(|&x| x as f64))
                .collect();
            let mut rng = subspace_rng(seed, l);
            kmeans::kmeans(&sub, s, k, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let centroids = per_subspace
        .iter()
        .flat_map(|r| r.centroids.iter().map(|&c| c as f32))
        .collect();
    let mut cb = PQCodebook::from_centroids(dim, subspaces, k, centroids, seed)?;
    cb.max_iterations = cfg.max_iterations;
    Ok(cb)
}

/// Mean squared reconstruction error of a row-major batch.
pub fn quantization_error(cb: &PQCodebook, data: &[f32]) -> Result<f64> {
    let n = data.len() / cb.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for v in data.chunks_exact(cb.dim()) {
        let rec = cb.decode(&cb.encode(v)?.0)?;
        total += v
            .iter()
            .zip(&rec)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>();
    }
    Ok(total / n as f64)
}
