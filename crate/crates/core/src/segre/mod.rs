//! Geometry of the Segre manifold of nonzero rank-one tensors.
//!
//! A [`SegrePoint`] is stored as `λ · u_1 ⊗ ⋯ ⊗ u_d` with unit factors. The
//! representation is unique up to sign patterns on the factors whose product
//! is one; [`SegrePoint::canonical`] picks a representative by making the
//! largest-magnitude entry of every factor positive and moving the residual
//! sign into `λ`.

mod metrics;
mod retract;
mod tangent;

pub use metrics::{align_and_error, incoherence, ErrorReport, Incoherence};
pub use retract::{retract_thosvd, retract_thosvd_with_info, RetractionInfo};
pub(crate) use retract::leading_vectors_raw;
pub use tangent::{project_tangent, tangent_basis, TangentBasis};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::canonicalize_sign;
use crate::tensor::{check_shape, norm, outer_rank_one, DenseTensor, Matrix};

const UNIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct SegrePoint {
    weight: f64,
    factors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    weight: f64,
    factors: Vec<Vec<f64>>,
}

impl TryFrom<RawPoint> for SegrePoint {
    type Error = Error;

    fn try_from(raw: RawPoint) -> Result<Self> {
        SegrePoint::new(raw.weight, raw.factors)
    }
}

impl From<SegrePoint> for RawPoint {
    fn from(p: SegrePoint) -> Self {
        RawPoint {
            weight: p.weight,
            factors: p.factors,
        }
    }
}

impl SegrePoint {
    /// Requires a nonzero finite weight and unit-norm factors (to 1e-12).
    pub fn new(weight: f64, factors: Vec<Vec<f64>>) -> Result<Self> {
        if weight == 0.0 || !weight.is_finite() {
            return Err(invalid(format!("Segre point weight must be nonzero and finite, got {weight}")));
        }
        check_shape(&factors.iter().map(Vec::len).collect::<Vec<_>>())?;
        for (l, f) in factors.iter().enumerate() {
            let n = norm(f);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(invalid(format!("factor {l} has norm {n}, expected 1")));
            }
        }
        Ok(Self { weight, factors })
    }

    /// Normalizes the factors and folds their norms into the weight.
    pub fn from_unnormalized(weight: f64, mut factors: Vec<Vec<f64>>) -> Result<Self> {
        let mut w = weight;
        for f in &mut factors {
            let n = norm(f);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::DegenerateInput("zero factor vector".into()));
            }
            f.iter_mut().for_each(|x| *x /= n);
            w *= n;
        }
        Self::new(w, factors)
    }

    pub(crate) fn from_parts_unchecked(weight: f64, factors: Vec<Vec<f64>>) -> Self {
        Self { weight, factors }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn factor_refs(&self) -> Vec<&[f64]> {
        self.factors.iter().map(Vec::as_slice).collect()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Vec::len).collect()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// Manifold dimension `1 + Σ_l (p_l − 1)`.
    pub fn manifold_dim(&self) -> usize {
        1 + self.factors.iter().map(|f| f.len() - 1).sum::<usize>()
    }

    /// The ambient rank-one tensor `λ · u_1 ⊗ ⋯ ⊗ u_d`.
    pub fn embed(&self) -> DenseTensor {
        outer_rank_one(self.weight, &self.factors).expect("Segre point factors are valid")
    }

    pub fn negated(&self) -> SegrePoint {
        Self {
            weight: -self.weight,
            factors: self.factors.clone(),
        }
    }

    /// Same tensor, sign-canonical representative.
    pub fn canonical(&self) -> SegrePoint {
        let mut factors = self.factors.clone();
        let mut w = self.weight;
        for f in &mut factors {
            w *= canonicalize_sign(f);
        }
        Self { weight: w, factors }
    }

    /// `⟨embed(self), embed(other)⟩` without materializing either tensor.
    pub fn inner(&self, other: &SegrePoint) -> f64 {
        self.factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| crate::tensor::dot(a, b))
            .product::<f64>()
            * self.weight
            * other.weight
    }
}

/// An ordered list of `r` rank-one components sharing one shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SegrePoint>", into = "Vec<SegrePoint>")]
pub struct CPModel {
    components: Vec<SegrePoint>,
}

impl TryFrom<Vec<SegrePoint>> for CPModel {
    type Error = Error;

    fn try_from(components: Vec<SegrePoint>) -> Result<Self> {
        CPModel::new(components)
    }
}

impl From<CPModel> for Vec<SegrePoint> {
    fn from(m: CPModel) -> Self {
        m.components
    }
}

impl CPModel {
    pub fn new(components: Vec<SegrePoint>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid("a CP model needs at least one component"))?
            .shape();
        if components.iter().any(|c| c.shape() != first) {
            return Err(invalid("CP model components must share one shape"));
        }
        Ok(Self { components })
    }

    /// Builds a model from factor matrices `U_l` (`p_l × r`, columns
    /// normalized here) and weights.
    pub fn from_factor_matrices(weights: &[f64], factors: &[Matrix]) -> Result<Self> {
        let r = weights.len();
        if factors.iter().any(|u| u.ncols() != r) {
            return Err(invalid("factor matrices must have one column per weight"));
        }
        let components = (0..r)
            .map(|i| {
                let f = factors.iter().map(|u| u.column(i).iter().copied().collect()).collect();
                SegrePoint::from_unnormalized(weights[i], f)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.components[0].shape()
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn components(&self) -> &[SegrePoint] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &SegrePoint {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<SegrePoint> {
        self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(SegrePoint::weight).collect()
    }

    /// `U_l = [u_{l,1}, …, u_{l,r}]`.
    pub fn factor_matrix(&self, l: usize) -> Matrix {
        let p = self.components[0].factors[l].len();
        Matrix::from_fn(p, self.rank(), |a, i| self.components[i].factors[l][a])
    }

    /// `Σ_i embed(T_i)`.
    pub fn embed(&self) -> DenseTensor {
        let mut acc = self.components[0].embed();
        for c in &self.components[1..] {
            acc.axpy(1.0, &c.embed()).expect("shared shape");
        }
        acc
    }

    /// `Σ_{j≠skip} embed(T_j)`; a zero tensor when the model has one component.
    pub fn embed_except(&self, skip: usize) -> DenseTensor {
        let mut acc = DenseTensor::zeros(&self.shape()).expect("valid shape");
        for (j, c) in self.components.iter().enumerate() {
            if j != skip {
                acc.axpy(1.0, &c.embed()).expect("shared shape");
            }
        }
        acc
    }

    pub(crate) fn replace(&mut self, i: usize, point: SegrePoint) {
        self.components[i] = point;
    }
}
