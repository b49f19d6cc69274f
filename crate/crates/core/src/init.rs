//! Starting points: composite PCA (CPCA) on a balanced unfolding, random
//! unit-sphere factors, and the adjoint warm start for regression.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::top_svd;
use crate::measurement::MeasurementOp;
use crate::rng::{substream, Purpose};
use crate::segre::leading_vectors_raw;
use crate::segre::{CPModel, SegrePoint};
use crate::tensor::{contract_all, norm, strides, DenseTensor, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    Random,
    Cpca,
    AdjointCpca,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub method: InitMethod,
    #[serde(default)]
    pub seed: u64,
    /// Replicate index selecting the random substream.
    #[serde(default)]
    pub replicate: u64,
    /// Zero-based row modes of the CPCA unfolding; chosen automatically when absent.
    #[serde(default)]
    pub cpca_split: Option<Vec<usize>>,
}

impl InitSpec {
    pub fn random(seed: u64) -> Self {
        Self { method: InitMethod::Random, seed, replicate: 0, cpca_split: None }
    }

    pub fn cpca() -> Self {
        Self { method: InitMethod::Cpca, seed: 0, replicate: 0, cpca_split: None }
    }

    pub fn adjoint_cpca() -> Self {
        Self { method: InitMethod::AdjointCpca, seed: 0, replicate: 0, cpca_split: None }
    }
}

/// Row modes `S` maximizing `min(p_S, p*/p_S)`. Ties prefer `p_S ≥ p*/p_S`,
/// then the fewest modes, then the lexicographically smallest set.
pub fn choose_split(shape: &[usize]) -> Vec<usize> {
    let d = shape.len();
    let total: usize = shape.iter().product();
    let mut candidates: Vec<Vec<usize>> = (1u32..(1 << d) - 1)
        .map(|mask| (0..d).filter(|&k| mask >> k & 1 == 1).collect())
        .collect();
    let key = |s: &Vec<usize>| {
        let ps: usize = s.iter().map(|&k| shape[k]).product();
        (ps.min(total / ps), ps >= total / ps)
    };
    candidates.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        kb.0.cmp(&ka.0).then(kb.1.cmp(&ka.1)).then(a.len().cmp(&b.len())).then(a.cmp(b))
    });
    candidates.swap_remove(0)
}

/// `p_S × (p*/p_S)` unfolding; rows and columns follow row-major order over
/// the (increasing) modes of `S` and of its complement.
pub(crate) fn split_unfold(t: &DenseTensor, rows: &[usize]) -> Matrix {
    let shape = t.shape();
    let cols: Vec<usize> = (0..shape.len()).filter(|k| !rows.contains(k)).collect();
    let st = strides(shape);
    let offsets = |modes: &[usize]| -> Vec<usize> {
        let mut out = vec![0usize];
        for &k in modes {
            let (p, step) = (shape[k], st[k]);
            out = out.iter().flat_map(|&o| (0..p).map(move |i| o + i * step)).collect();
        }
        out
    };
    let (ro, co) = (offsets(rows), offsets(&cols));
    let data = t.data();
    Matrix::from_fn(ro.len(), co.len(), |a, b| data[ro[a] + co[b]])
}

pub fn cpca(t: &DenseTensor, r: usize, split: Option<&[usize]>) -> Result<CPModel> {
    let shape = t.shape().to_vec();
    let d = shape.len();
    let rows: Vec<usize> = match split {
        Some(s) => {
            let mut s = s.to_vec();
            s.sort_unstable();
            s.dedup();
            if s.is_empty() || s.len() >= d || s.iter().any(|&k| k >= d) {
                return Err(invalid(format!("CPCA split {s:?} must be a nonempty proper subset of the {d} modes")));
            }
            s
        }
        None => choose_split(&shape),
    };
    let cols: Vec<usize> = (0..d).filter(|k| !rows.contains(k)).collect();
    let row_shape: Vec<usize> = rows.iter().map(|&k| shape[k]).collect();
    let col_shape: Vec<usize> = cols.iter().map(|&k| shape[k]).collect();
    let m = split_unfold(t, &rows);
    let bound = m.nrows().min(m.ncols());
    if r == 0 || r > bound {
        return Err(invalid(format!("rank {r} exceeds the CPCA unfolding bound {bound}")));
    }
    let (u, s, v) = top_svd(&m, r);
    let mut comps = Vec::with_capacity(r);
    for j in 0..r {
        if !(s[j] > 0.0) {
            return Err(Error::DegenerateInput(format!("singular value {j} of the CPCA unfolding vanished")));
        }
        let uj: Vec<f64> = u.column(j).iter().copied().collect();
        let vj: Vec<f64> = v.column(j).iter().copied().collect();
        let degenerate = || Error::DegenerateInput("zero singular vector in CPCA".into());
        let (fu, _) = leading_vectors_raw(&uj, &row_shape).ok_or_else(degenerate)?;
        let (fv, _) = leading_vectors_raw(&vj, &col_shape).ok_or_else(degenerate)?;
        let ref_u: Vec<&[f64]> = fu.iter().map(Vec::as_slice).collect();
        let ref_v: Vec<&[f64]> = fv.iter().map(Vec::as_slice).collect();
        let align = contract_all(&uj, &row_shape, &ref_u) * contract_all(&vj, &col_shape, &ref_v);
        let sign = if align < 0.0 { -1.0 } else { 1.0 };
        let mut factors = vec![Vec::new(); d];
        for (k, f) in rows.iter().zip(fu) {
            factors[*k] = f;
        }
        for (k, f) in cols.iter().zip(fv) {
            factors[*k] = f;
        }
        comps.push(SegrePoint::new(sign * s[j], factors)?);
    }
    CPModel::new(comps)
}

/// Factors uniform on each unit sphere; weights `⟨Y, u_1 ⊗ ⋯ ⊗ u_d⟩`.
pub fn random_init(y: &DenseTensor, r: usize, seed: u64, replicate: u64) -> Result<CPModel> {
    if r == 0 {
        return Err(invalid("rank must be at least 1"));
    }
    let mut rng = substream(seed, Purpose::Init, replicate);
    let mut comps = Vec::with_capacity(r);
    for i in 0..r {
        let factors: Vec<Vec<f64>> = y.shape().iter().map(|&p| random_unit(&mut rng, p)).collect();
        let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
        let w = contract_all(y.data(), y.shape(), &refs);
        if w == 0.0 || !w.is_finite() {
            return Err(Error::DegenerateInput(format!("random component {i} is orthogonal to the data")));
        }
        comps.push(SegrePoint::new(w, factors)?);
    }
    CPModel::new(comps)
}

pub(crate) fn random_unit(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

pub fn init_decomposition(y: &DenseTensor, r: usize, spec: &InitSpec) -> Result<CPModel> {
    match spec.method {
        InitMethod::Random => random_init(y, r, spec.seed, spec.replicate),
        InitMethod::Cpca => cpca(y, r, spec.cpca_split.as_deref()),
        InitMethod::AdjointCpca => Err(invalid("adjoint CPCA needs a Gaussian design operator")),
    }
}

/// CPCA on the adjoint estimator `A*(y)`.
pub fn init_regression(op: &MeasurementOp, y: &[f64], r: usize, split: Option<&[usize]>) -> Result<CPModel> {
    if !matches!(op, MeasurementOp::GaussianDesign(_)) {
        return Err(invalid("regression initialization needs a Gaussian design operator"));
    }
    cpca(&op.adjoint(y)?, r, split)
}

/// Dispatches on the operator: the identity decomposes `unvec(y)` directly,
/// a design ensemble starts from `A*(y)`.
pub fn initialize(op: &MeasurementOp, y: &[f64], r: usize, spec: &InitSpec) -> Result<CPModel> {
    match op {
        MeasurementOp::Identity { .. } => init_decomposition(&op.adjoint(y)?, r, spec),
        MeasurementOp::GaussianDesign(_) => match spec.method {
            InitMethod::Random => random_init(&op.adjoint(y)?, r, spec.seed, spec.replicate),
            InitMethod::Cpca | InitMethod::AdjointCpca => init_regression(op, y, r, spec.cpca_split.as_deref()),
        },
    }
}
