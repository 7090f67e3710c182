//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    /// Stop once the relative inertia change falls below this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Row-major `k × dim`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lower index.
#[inline]
pub(crate) fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_shape(data: &[f64], dim: usize, k: usize) -> Result<usize> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "data of {} values is not a multiple of dim {dim}",
            data.len()
        )));
    }
    let n = data.len() / dim;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    Ok(n)
}

/// k-means++ seeding: first centroid uniform, the rest by D² sampling.
pub fn kmeans_pp_init<R: Rng>(data: &[f64], dim: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = check_shape(data, dim, k)?;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > r && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `r` just past the running sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        let c = point(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), &c));
        }
        centroids.extend_from_slice(&c);
    }
    Ok(centroids)
}

/// Lloyd iterations from the given starting centroids.
///
/// Empty clusters are reseeded with the point farthest from its centroid.
pub fn lloyd(data: &[f64], dim: usize, init: Vec<f64>, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let k = init.len() / dim.max(1);
    let n = check_shape(data, dim, k)?;
    if init.len() != k * dim {
        return Err(Error::InvalidArgument("initial centroids have the wrong shape".into()));
    }
    let mut centroids = init;
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    let mut prev = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..cfg.max_iterations {
        iterations += 1;
        let mut inertia = 0.0;
        for i in 0..n {
            let (j, d) = nearest(&data[i * dim..(i + 1) * dim], &centroids, dim);
            assignments[i] = j;
            dists[i] = d;
            inertia += d;
        }

        counts.iter_mut().for_each(|c| *c = 0);
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let Some(far) = (0..n)
                .filter(|&i| dists[i] > 0.0)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            else {
                break;
            };
            counts[assignments[far]] -= 1;
            assignments[far] = c;
            counts[c] = 1;
            inertia -= dists[far];
            dists[far] = 0.0;
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
        }

        sums.iter_mut().for_each(|s| *s = 0.0);
        for (i, &a) in assignments.iter().enumerate() {
            for (s, x) in sums[a * dim..(a + 1) * dim]
                .iter_mut()
                .zip(&data[i * dim..(i + 1) * dim])
            {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *dst = s * inv;
            }
        }

        let converged = prev.is_finite() && (prev - inertia).abs() <= cfg.tolerance * prev;
        prev = inertia;
        if converged {
            break;
        }
    }

    let mut inertia = 0.0;
    for i in 0..n {
        let (j, d) = nearest(&data[i * dim..(i + 1) * dim], &centroids, dim);
        assignments[i] = j;
        inertia += d;
    }
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
        iterations,
    })
}

/// k-means++ seeding followed by [`lloyd`].
pub fn kmeans<R: Rng>(
    data: &[f64],
    dim: usize,
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<KMeansResult> {
    let init = kmeans_pp_init(data, dim, k, rng)?;
    lloyd(data, dim, init, cfg)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn insufficient_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = kmeans(&[0.0, 1.0], 1, 3, &KMeansConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::InsufficientData { needed: 3, got: 2 })));
    }

    #[test]
    fn exact_clusters_reach_zero_inertia() {
        let values = [[0.0, 0.0], [5.0, 5.0], [-3.0, 2.0]];
        let data: Vec<f64> = (0..30).flat_map(|i| values[i % 3]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = kmeans(&data, 2, 3, &KMeansConfig::default(), &mut rng).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut got: Vec<[f64; 2]> = r.centroids.chunks(2).map(|c| [c[0], c[1]]).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, vec![[-3.0, 2.0], [0.0, 0.0], [5.0, 5.0]]);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Two centroids start on top of each other; one stays empty.
        let data = [0.0, 0.1, 10.0, 10.1];
        let r = lloyd(&data, 1, vec![0.0, 0.0], &KMeansConfig::default()).unwrap();
        let mut c = r.centroids.clone();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
        assert!((r.inertia - 4.0 * 0.05 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut gen = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..600).map(|_| gen.random::<f64>()).collect();
        let run = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            kmeans(&data, 3, 8, &KMeansConfig::default(), &mut rng).unwrap()
        };
        assert_eq!(run(4), run(4));
    }
}
