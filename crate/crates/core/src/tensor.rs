//! Dense order-d tensors and the multilinear primitives built on them.
//!
//! # Storage convention
//!
//! Entries are stored row-major: the **last** index varies fastest. For a
//! shape `(p_1, ..., p_d)` the entry `(i_1, ..., i_d)` (zero-based) lives at
//! offset `Σ_l i_l · s_l` with `s_d = 1` and `s_l = s_{l+1} · p_{l+1}`.
//!
//! The mode-`k` unfolding is the `p_k × (p*/p_k)` matrix whose column index is
//! the row-major linear index of the remaining multi-index, i.e. the other
//! modes in ascending order with the last one fastest. Modes are zero-based
//! throughout the API.
//!
//! # Serialization
//!
//! JSON: `{"shape": [p_1, ..., p_d], "data": [...]}` with `data` in the storage
//! order above. Binary (little endian): the magic bytes `SGTN`, a `u8` format
//! version (1), a `u32` order `d`, `d` × `u64` mode sizes, then `p*` × `f64`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Column-major dense matrix used for unfoldings and small factorizations.
pub type Matrix = DMatrix<f64>;

const BINARY_MAGIC: &[u8; 4] = b"SGTN";
const BINARY_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.shape, raw.data)
    }
}

impl From<DenseTensor> for RawTensor {
    fn from(t: DenseTensor) -> Self {
        RawTensor {
            shape: t.shape,
            data: t.data,
        }
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.len() < 2 {
        return Err(invalid(format!(
            "tensor order must be at least 2, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(invalid(format!("mode sizes must be positive, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(invalid(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment_index(&mut idx, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Total number of entries `p*`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        if index.len() != self.shape.len() || index.iter().zip(&self.shape).any(|(i, p)| i >= p) {
            return None;
        }
        let offset: usize = index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum();
        Some(self.data[offset])
    }

    pub fn fro_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn scaled(&self, alpha: f64) -> DenseTensor {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.lin_comb(1.0, other, -1.0)
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &DenseTensor, b: f64) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// In-place `self += alpha · other`.
    pub(crate) fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        self.check_same_shape(other)?;
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub(crate) fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(invalid(format!(
                "mode {k} out of range for an order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }

    /// Mode-`k` matricization (see the module docs for the column order).
    pub fn mode_unfold(&self, k: usize) -> Result<Matrix> {
        self.check_mode(k)?;
        let (outer, pk, inner) = split_dims(&self.shape, k);
        let mut m = Matrix::zeros(pk, outer * inner);
        for o in 0..outer {
            for a in 0..pk {
                let src = &self.data[(o * pk + a) * inner..(o * pk + a + 1) * inner];
                for (i, &x) in src.iter().enumerate() {
                    m[(a, o * inner + i)] = x;
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`mode_unfold`](Self::mode_unfold).
    pub fn refold(matrix: &Matrix, k: usize, shape: &[usize]) -> Result<DenseTensor> {
        let len = check_shape(shape)?;
        if k >= shape.len() {
            return Err(invalid(format!("mode {k} out of range for shape {shape:?}")));
        }
        let (outer, pk, inner) = split_dims(shape, k);
        if matrix.nrows() != pk || matrix.ncols() != outer * inner {
            return Err(invalid(format!(
                "matrix {}x{} cannot refold along mode {k} into {shape:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut data = vec![0.0; len];
        for o in 0..outer {
            for a in 0..pk {
                let dst = &mut data[(o * pk + a) * inner..(o * pk + a + 1) * inner];
                for (i, x) in dst.iter_mut().enumerate() {
                    *x = matrix[(a, o * inner + i)];
                }
            }
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Mode-`k` product `T ×_k M`; mode size `p_k` becomes `M.nrows()`.
    pub fn mode_multiply(&self, k: usize, m: &Matrix) -> Result<DenseTensor> {
        self.check_mode(k)?;
        let (outer, pk, inner) = split_dims(&self.shape, k);
        if m.ncols() != pk {
            return Err(invalid(format!(
                "mode-{k} product needs a matrix with {pk} columns, got {}",
                m.ncols()
            )));
        }
        let q = m.nrows();
        if q == 0 {
            return Err(invalid("mode product matrix has no rows"));
        }
        let mut shape = self.shape.clone();
        shape[k] = q;
        let mut data = vec![0.0; outer * q * inner];
        for o in 0..outer {
            for b in 0..q {
                let dst = &mut data[(o * q + b) * inner..(o * q + b + 1) * inner];
                for a in 0..pk {
                    let w = m[(b, a)];
                    if w != 0.0 {
                        let src = &self.data[(o * pk + a) * inner..(o * pk + a + 1) * inner];
                        axpy(w, src, dst);
                    }
                }
            }
        }
        Ok(DenseTensor { shape, data })
    }

    /// `unfold_k(T) · unfold_k(T)ᵀ` without materializing the unfolding.
    pub fn mode_gram(&self, k: usize) -> Result<Matrix> {
        self.check_mode(k)?;
        Ok(mode_gram_raw(&self.data, &self.shape, k))
    }

    /// `T ×_{l≠k} u_lᵀ`: contracts every mode except `k` against `factors[l]`.
    pub fn contract_except(&self, k: usize, factors: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_mode(k)?;
        self.check_factors(factors)?;
        Ok(contract_except(&self.data, &self.shape, factors, k))
    }

    /// Full contraction `⟨T, u_1 ⊗ ⋯ ⊗ u_d⟩`.
    pub fn contract_all(&self, factors: &[&[f64]]) -> Result<f64> {
        self.check_factors(factors)?;
        Ok(contract_all(&self.data, &self.shape, factors))
    }

    fn check_factors(&self, factors: &[&[f64]]) -> Result<()> {
        if factors.len() != self.order()
            || factors.iter().zip(&self.shape).any(|(f, &p)| f.len() != p)
        {
            return Err(invalid(format!(
                "factor lengths {:?} do not match shape {:?}",
                factors.iter().map(|f| f.len()).collect::<Vec<_>>(),
                self.shape
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 8 * (self.order() + self.len()));
        out.extend_from_slice(BINARY_MAGIC);
        out.push(BINARY_VERSION);
        out.extend_from_slice(&(self.order() as u32).to_le_bytes());
        for &p in &self.shape {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DenseTensor> {
        let bad = |what: &str| invalid(format!("malformed tensor bytes: {what}"));
        if bytes.len() < 9 || &bytes[..4] != BINARY_MAGIC {
            return Err(bad("missing header"));
        }
        if bytes[4] != BINARY_VERSION {
            return Err(bad("unsupported version"));
        }
        let order = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let mut pos = 9;
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            let chunk = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated shape"))?;
            shape.push(u64::from_le_bytes(chunk.try_into().unwrap()) as usize);
            pos += 8;
        }
        let len = check_shape(&shape)?;
        if bytes.len() != pos + 8 * len {
            return Err(bad("payload length does not match shape"));
        }
        let data = bytes[pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DenseTensor { shape, data })
    }
}

/// Rank-one tensor `weight · f_1 ⊗ ⋯ ⊗ f_d`.
pub fn outer_rank_one<F: AsRef<[f64]>>(weight: f64, factors: &[F]) -> Result<DenseTensor> {
    if factors.iter().any(|f| f.as_ref().is_empty()) {
        return Err(invalid("outer product factors must be nonempty"));
    }
    let shape: Vec<usize> = factors.iter().map(|f| f.as_ref().len()).collect();
    let len = check_shape(&shape)?;
    // Build by repeated Kronecker expansion; the last factor ends up fastest.
    let mut data = Vec::with_capacity(len);
    data.push(weight);
    for f in factors {
        let f = f.as_ref();
        let mut next = Vec::with_capacity(data.len() * f.len());
        for &x in &data {
            next.extend(f.iter().map(|&y| x * y));
        }
        data = next;
    }
    Ok(DenseTensor { shape, data })
}

pub fn inner(t: &DenseTensor, s: &DenseTensor) -> Result<f64> {
    t.inner(s)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for l in (0..shape.len().saturating_sub(1)).rev() {
        s[l] = s[l + 1] * shape[l + 1];
    }
    s
}

pub(crate) fn increment_index(idx: &mut [usize], shape: &[usize]) {
    for l in (0..shape.len()).rev() {
        idx[l] += 1;
        if idx[l] < shape[l] {
            return;
        }
        idx[l] = 0;
    }
}

/// `(Π_{l<k} p_l, p_k, Π_{l>k} p_l)`.
pub(crate) fn split_dims(shape: &[usize], k: usize) -> (usize, usize, usize) {
    let outer = shape[..k].iter().product();
    let inner = shape[k + 1..].iter().product();
    (outer, shape[k], inner)
}

pub(crate) fn mode_gram_raw(data: &[f64], shape: &[usize], k: usize) -> Matrix {
    let (outer, pk, inner) = split_dims(shape, k);
    let mut g = Matrix::zeros(pk, pk);
    if inner == 1 {
        // Mode k is the fastest index: rows of the block are strided, so
        // accumulate outer products of contiguous fibers instead.
        for o in 0..outer {
            let fiber = &data[o * pk..(o + 1) * pk];
            for a in 0..pk {
                let fa = fiber[a];
                if fa == 0.0 {
                    continue;
                }
                for b in a..pk {
                    g[(a, b)] += fa * fiber[b];
                }
            }
        }
    } else {
        for o in 0..outer {
            let block = &data[o * pk * inner..(o + 1) * pk * inner];
            for a in 0..pk {
                let ra = &block[a * inner..(a + 1) * inner];
                for b in a..pk {
                    g[(a, b)] += dot(ra, &block[b * inner..(b + 1) * inner]);
                }
            }
        }
    }
    for a in 0..pk {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Contracts all modes except `k` of a row-major tensor; any order ≥ 1.
pub(crate) fn contract_except(data: &[f64], shape: &[usize], factors: &[&[f64]], k: usize) -> Vec<f64> {
    let d = shape.len();
    let mut owned: Option<Vec<f64>> = None;
    let mut len: usize = shape.iter().product();
    // Trailing modes first: each is the fastest index of what remains.
    for l in (k + 1..d).rev() {
        let src = owned.as_deref().unwrap_or(data);
        let p = shape[l];
        let rows = len / p;
        let next: Vec<f64> = (0..rows).map(|r| dot(&src[r * p..(r + 1) * p], factors[l])).collect();
        len = rows;
        owned = Some(next);
    }
    // Leading modes: each is now the slowest index.
    for (l, u) in factors.iter().enumerate().take(k) {
        let src = owned.as_deref().unwrap_or(data);
        let rest = len / shape[l];
        let mut next = vec![0.0; rest];
        for (a, &w) in u.iter().enumerate() {
            if w != 0.0 {
                axpy(w, &src[a * rest..(a + 1) * rest], &mut next);
            }
        }
        len = rest;
        owned = Some(next);
    }
    owned.unwrap_or_else(|| data.to_vec())
}

/// Every single-mode-free contraction at once, plus the full contraction.
///
/// Returns `(v, c)` with `v[k] = X ×_{l≠k} u_l` and `c = ⟨X, u_1 ⊗ ⋯ ⊗ u_d⟩`,
/// at roughly twice the cost of a single pass over `X`.
pub(crate) fn partial_contractions(data: &[f64], shape: &[usize], factors: &[&[f64]]) -> (Vec<Vec<f64>>, f64) {
    let d = shape.len();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut cur: Vec<f64> = Vec::new();
    let mut first = true;
    let mut len: usize = shape.iter().product();
    for l in (1..d).rev() {
        let src: &[f64] = if first { data } else { &cur };
        let p = shape[l];
        let rows = len / p;
        // Free mode l: weight each row by the Kronecker product of u_0..u_{l-1}.
        let w = kron(&factors[..l]);
        let mut free = vec![0.0; p];
        for (r, &wr) in w.iter().enumerate() {
            if wr != 0.0 {
                axpy(wr, &src[r * p..(r + 1) * p], &mut free);
            }
        }
        out[l] = free;
        let reduced: Vec<f64> = (0..rows).map(|r| dot(&src[r * p..(r + 1) * p], factors[l])).collect();
        cur = reduced;
        first = false;
        len = rows;
    }
    let last: Vec<f64> = if first { data.to_vec() } else { cur };
    let full = dot(&last, factors[0]);
    out[0] = last;
    (out, full)
}

pub(crate) fn contract_all(data: &[f64], shape: &[usize], factors: &[&[f64]]) -> f64 {
    let v = contract_except(data, shape, factors, 0);
    dot(&v, factors[0])
}

/// Kronecker product of vectors, first factor slowest.
pub(crate) fn kron(factors: &[&[f64]]) -> Vec<f64> {
    let mut acc = vec![1.0];
    for f in factors {
        let mut next = Vec::with_capacity(acc.len() * f.len());
        for &x in &acc {
            next.extend(f.iter().map(|&y| x * y));
        }
        acc = next;
    }
    acc
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
