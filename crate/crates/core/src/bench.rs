//! Timing of lookup-table scoring against full-precision cosine.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pq::{build_query_lut, score_codes, NormMode, PQCodebook, DEFAULT_CENTROIDS};

pub const MIN_REPETITIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub operation: String,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub repetitions: usize,
    pub median_seconds: f64,
    pub p95_seconds: f64,
    /// Scored vectors per second at the median time.
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutBenchmark {
    pub full: BenchReport,
    pub adc: BenchReport,
    /// Full-precision median time over ADC median time.
    pub speedup: f64,
    /// Index of the best match under full cosine and under exact-norm ADC.
    pub top1_full: usize,
    pub top1_adc: usize,
    pub top1_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutBenchConfig {
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub repetitions: usize,
    pub seed: u64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    // Nearest-rank.
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn report(operation: &str, cfg: &LutBenchConfig, mut times: Vec<f64>) -> BenchReport {
    times.sort_by(f64::total_cmp);
    let median = percentile(&times, 0.5);
    BenchReport {
        operation: operation.to_string(),
        n: cfg.n,
        d: cfg.d,
        l: cfg.l,
        repetitions: times.len(),
        median_seconds: median,
        p95_seconds: percentile(&times, 0.95),
        throughput: cfg.n as f64 / median,
    }
}

#[inline]
fn dot8(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// Cosine of every row against a unit query, given precomputed inverse norms.
pub fn full_cosine_scores(data: &[f32], inv_norms: &[f32], q: &[f32], out: &mut [f32]) {
    for ((row, &inv), o) in data.chunks_exact(q.len()).zip(inv_norms).zip(out.iter_mut()) {
        *o = dot8(row, q) * inv;
    }
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

/// Times ADC scoring of `n` random codes against full cosine over their
/// decoded vectors, so both sides rank the same database.
pub fn bench_lut(cfg: &LutBenchConfig) -> Result<LutBenchmark> {
    if cfg.repetitions < MIN_REPETITIONS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_REPETITIONS} repetitions, got {}",
            cfg.repetitions
        )));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if cfg.n < 10_000 {
        log::warn!("n = {} is too small for stable timings", cfg.n);
    }
    let (n, d, l) = (cfg.n, cfg.d, cfg.l);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = DEFAULT_CENTROIDS;
    let centroids = (0..d * k).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let cb = PQCodebook::from_centroids(d, l, k, centroids, cfg.seed)?;
    let codes: Vec<u8> = (0..n * l).map(|_| rng.random::<u8>()).collect();
    let mut full = vec![0.0f32; n * d];
    for (row, code) in full.chunks_exact_mut(d).zip(codes.chunks_exact(l)) {
        for (dst, (sub, &j)) in row.chunks_exact_mut(d / l).zip(code.iter().enumerate()) {
            dst.copy_from_slice(cb.centroid(sub, j as usize));
        }
    }
    let inv_norms: Vec<f32> = full
        .chunks_exact(d)
        .map(|r| (1.0 / r.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()) as f32)
        .collect();
    let q: Vec<f32> = {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / nrm) as f32).collect()
    };

    let mut out = vec![0.0f32; n];
    let mut full_times = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let t = Instant::now();
        full_cosine_scores(&full, &inv_norms, &q, &mut out);
        full_times.push(t.elapsed().as_secs_f64());
        std::hint::black_box(&out);
    }
    let top1_full = argmax(&out);
    drop(full);

    let mut adc_times = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let t = Instant::now();
        let lut = build_query_lut(&q, &cb)?;
        score_codes(&codes, &lut, NormMode::SubNormSum, &mut out)?;
        adc_times.push(t.elapsed().as_secs_f64());
        std::hint::black_box(&out);
    }
    let lut = build_query_lut(&q, &cb)?;
    score_codes(&codes, &lut, NormMode::Exact, &mut out)?;
    let top1_adc = argmax(&out);

    let full = report("full-cosine", cfg, full_times);
    let adc = report("adc-lut", cfg, adc_times);
    Ok(LutBenchmark {
        speedup: full.median_seconds / adc.median_seconds,
        full,
        adc,
        top1_full,
        top1_adc,
        top1_match: top1_full == top1_adc,
    })
}
