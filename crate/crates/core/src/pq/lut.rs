//! Query lookup tables and asymmetric (query vs code) scoring.

use serde::{Deserialize, Serialize};

use super::PQCodebook;
use crate::error::{Error, Result};

/// How an ADC inner product is normalized into a similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Divide by the sum of the decoded sub-vector norms.
    #[default]
    SubNormSum,
    /// Divide by the true decoded norm `sqrt(Σ‖f̄_l‖²)`.
    Exact,
}

/// Per-query table of sub-vector inner products and centroid norms.
///
/// Rows are padded to 256 entries so an 8-bit code indexes them without
/// bounds checks; padding entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLUT {
    k: usize,
    // [dot, norm] per (sub-space, centroid).
    rows: Vec<[[f32; 2]; 256]>,
}

impl QueryLUT {
    pub fn subspaces(&self) -> usize {
        self.rows.len()
    }

    pub fn centroids_per_subspace(&self) -> usize {
        self.k
    }

    /// `q_l · c_lj`.
    pub fn table(&self, l: usize, j: usize) -> f32 {
        self.rows[l][j][0]
    }

    /// `‖c_lj‖₂`.
    pub fn norm_table(&self, l: usize, j: usize) -> f32 {
        self.rows[l][j][1]
    }
}

pub fn build_query_lut(q: &[f32], cb: &PQCodebook) -> Result<QueryLUT> {
    if q.len() != cb.dim() {
        return Err(Error::InvalidArgument(format!(
            "query has dimension {}, codebook expects {}",
            q.len(),
            cb.dim()
        )));
    }
    let s = cb.sub_dim();
    let k = cb.centroids_per_subspace();
    let rows = q
        .chunks_exact(s)
        .enumerate()
        .map(|(l, ql)| {
            let mut row = [[0.0f32; 2]; 256];
            for (j, entry) in row.iter_mut().enumerate().take(k) {
                let c = cb.centroid(l, j);
                let (dot, sq) = ql.iter().zip(c).fold((0.0f64, 0.0f64), |(d, n), (&a, &b)| {
                    (d + a as f64 * b as f64, n + b as f64 * b as f64)
                });
                *entry = [dot as f32, sq.sqrt() as f32];
            }
            row
        })
        .collect();
    Ok(QueryLUT { k, rows })
}

#[inline]
fn raw_and_denominator(code: &[u8], lut: &QueryLUT, mode: NormMode) -> (f32, f32) {
    // Four lanes break the add dependency chain.
    let mut raw = [0.0f32; 4];
    let mut den = [0.0f32; 4];
    let mut rows = lut.rows.chunks_exact(4);
    let mut codes = code.chunks_exact(4);
    for (r4, c4) in (&mut rows).zip(&mut codes) {
        for lane in 0..4 {
            let e = r4[lane][c4[lane] as usize];
            raw[lane] += e[0];
            den[lane] += match mode {
                NormMode::SubNormSum => e[1],
                NormMode::Exact => e[1] * e[1],
            };
        }
    }
    for (r, &c) in rows.remainder().iter().zip(codes.remainder()) {
        let e = r[c as usize];
        raw[0] += e[0];
        den[0] += match mode {
            NormMode::SubNormSum => e[1],
            NormMode::Exact => e[1] * e[1],
        };
    }
    let raw = (raw[0] + raw[1]) + (raw[2] + raw[3]);
    let den = (den[0] + den[1]) + (den[2] + den[3]);
    let den = match mode {
        NormMode::SubNormSum => den,
        NormMode::Exact => den.sqrt(),
    };
    (raw, den)
}

/// Similarity of the LUT's query to one code: `Σ table / Σ norm_table`
/// (or the exact-norm variant).
pub fn adc_score(code: &[u8], lut: &QueryLUT, mode: NormMode) -> Result<f32> {
    if code.len() != lut.subspaces() {
        return Err(Error::InvalidArgument(format!(
            "code has {} entries, table has {} sub-spaces",
            code.len(),
            lut.subspaces()
        )));
    }
    if let Some((l, &j)) = code.iter().enumerate().find(|(_, &j)| j as usize >= lut.k) {
        return Err(Error::CorruptCode {
            subspace: l,
            index: j as usize,
            k: lut.k,
        });
    }
    let (raw, den) = raw_and_denominator(code, lut, mode);
    if den == 0.0 {
        return Err(Error::DegenerateCode);
    }
    Ok(raw / den)
}

/// Score concatenated codes into `out`. Codes must be valid for the table.
pub fn score_codes(codes: &[u8], lut: &QueryLUT, mode: NormMode, out: &mut [f32]) -> Result<()> {
    let l = lut.subspaces();
    if codes.len() != out.len() * l {
        return Err(Error::InvalidArgument(format!(
            "{} code bytes do not match {} outputs of {l} sub-spaces",
            codes.len(),
            out.len()
        )));
    }
    if lut.k < 256 {
        if let Some(pos) = codes.iter().position(|&j| j as usize >= lut.k) {
            return Err(Error::CorruptCode {
                subspace: pos % l,
                index: codes[pos] as usize,
                k: lut.k,
            });
        }
    }
    for (code, o) in codes.chunks_exact(l).zip(out.iter_mut()) {
        let (raw, den) = raw_and_denominator(code, lut, mode);
        if den == 0.0 {
            return Err(Error::DegenerateCode);
        }
        *o = raw / den;
    }
    Ok(())
}
