//! Vector normalization, cosine similarity, top-K selection and moment
//! statistics.
//!
//! Embeddings are stored as `f32` (the on-disk precision) and every dot
//! product is accumulated sequentially in `f64`, so a similarity computed
//! anywhere in the crate is bitwise identical to the same similarity computed
//! anywhere else.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::ops::Deref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Tolerance on `|‖row‖ - 1|` accepted for rows that claim to be unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-4;

/// A unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps a vector that is already unit norm (within [`UNIT_NORM_TOL`]).
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        check_finite(&values)?;
        if values.is_empty() {
            return Err(Error::ZeroDim);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm { row: 0, norm });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl Deref for Embedding {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

fn check_finite(v: &[f32]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Euclidean norm, accumulated in `f64`.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Scales `v` to unit length.
pub fn l2_normalize(v: &[f32]) -> Result<Embedding> {
    check_finite(v)?;
    if v.is_empty() {
        return Err(Error::ZeroDim);
    }
    let norm = l2_norm(v);
    if norm <= ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(Embedding(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect()))
}

/// Same as [`l2_normalize`] for `f64` input.
pub fn l2_normalize_f64(v: &[f64]) -> Result<Embedding> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if v.is_empty() {
        return Err(Error::ZeroDim);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(Embedding(v.iter().map(|&x| (x / norm) as f32).collect()))
}

/// Sequential `f64` dot product. Callers guarantee equal lengths.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += f64::from(x) * f64::from(y);
    }
    acc
}

/// Similarity of two unit vectors given as raw slices, clamped to `[-1, 1]`.
#[inline]
pub(crate) fn sim(a: &[f32], b: &[f32]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, got })
    }
}

/// Cosine similarity of two unit embeddings.
pub fn cosine_sim(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(sim(a, b))
}

/// `n` unit-norm rows of a common dimension, each with a unique string id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data whose rows are already unit norm.
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let m = Self::unchecked(ids, dim, data)?;
        for (i, row) in m.rows().enumerate() {
            let norm = l2_norm(row);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitNorm { row: i, norm });
            }
        }
        Ok(m)
    }

    /// Builds a matrix from raw row-major data, normalizing every row.
    pub fn from_raw(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let mut m = Self::unchecked(ids, dim, data)?;
        for i in 0..m.len() {
            let unit = l2_normalize(m.row(i))?;
            m.data[i * dim..(i + 1) * dim].copy_from_slice(&unit);
        }
        Ok(m)
    }

    pub fn from_rows(ids: Vec<String>, rows: Vec<Embedding>) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.dim(),
            None => return Err(Error::EmptyMatrix),
        };
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            check_dim(dim, r.dim())?;
            data.extend_from_slice(r);
        }
        Self::unchecked(ids, dim, data)
    }

    /// An empty matrix of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::unchecked(Vec::new(), dim, Vec::new())
    }

    fn unchecked(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if data.len() != ids.len() * dim {
            return Err(Error::LengthMismatch {
                left: ids.len() * dim,
                right: data.len(),
            });
        }
        check_finite(&data)?;
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, dim, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Row-major payload.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Copy of row `i` as an owned [`Embedding`].
    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding(self.row(i).to_vec())
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(indices.len());
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::KTooLarge { k: i + 1, len: self.len() });
            }
            ids.push(self.ids[i].clone());
            data.extend_from_slice(self.row(i));
        }
        Self::unchecked(ids, self.dim, data)
    }
}

/// Dense `rows × cols` similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// All pairwise similarities between rows of `a` and rows of `b`.
///
/// Rows are computed in parallel; each entry is the same sequential dot
/// product as [`cosine_sim`], so results do not depend on the thread count.
pub fn sim_matrix(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<SimMatrix> {
    check_dim(a.dim(), b.dim())?;
    let cols = b.len();
    let mut data = vec![0.0f64; a.len() * cols];
    if cols > 0 {
        data.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
            let ai = a.row(i);
            for (o, bj) in out.iter_mut().zip(b.rows()) {
                *o = sim(ai, bj);
            }
        });
    }
    Ok(SimMatrix { rows: a.len(), cols, data })
}

/// Similarities of one vector against every row of `m`.
pub(crate) fn sims_to_rows(z: &[f32], m: &EmbeddingMatrix) -> Vec<f64> {
    m.rows().map(|r| sim(z, r)).collect()
}

fn desc_then_index(sims: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&i, &j| sims[j].total_cmp(&sims[i]).then(i.cmp(&j))
}

/// Indices of the `k` largest values, largest first; ties go to the lower index.
pub fn topk_indices(sims: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > sims.len() {
        return Err(Error::KTooLarge { k, len: sims.len() });
    }
    let mut idx: Vec<usize> = (0..sims.len()).collect();
    let cmp = desc_then_index(sims);
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    Ok(idx)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: f64,
    pub std: f64,
}

/// Arithmetic mean and population (divisor `n`) standard deviation, via
/// Welford's update.
pub fn moments(values: &[f64]) -> Result<MomentStats> {
    moments_iter(values.iter().copied())
}

pub(crate) fn moments_iter(values: impl IntoIterator<Item = f64>) -> Result<MomentStats> {
    let mut n = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let var = (m2 / n as f64).max(0.0);
    Ok(MomentStats { mean, std: var.sqrt() })
}
