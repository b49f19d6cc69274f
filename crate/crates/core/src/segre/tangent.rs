use nalgebra::DVector;

use super::SegrePoint;
use crate::error::{invalid, Result};
use crate::linalg::orthogonal_complement;
use crate::tensor::{dot, outer_rank_one, partial_contractions, DenseTensor, Matrix};

/// Orthogonal projection onto the tangent space at `point`.
///
/// With `P_l = u_l u_lᵀ` the projector is
/// `Σ_k X ×_k (I − P_k) ×_{l≠k} P_l + X ×_{l} P_l`. Every term collapses to a
/// rank-one tensor, so the result is assembled from the contractions
/// `g_k = X ×_{l≠k} u_l` and `c = ⟨X, u_1 ⊗ ⋯ ⊗ u_d⟩` in `O(d·p*)`.
pub fn project_tangent(point: &SegrePoint, x: &DenseTensor) -> Result<DenseTensor> {
    check_point_shape(point, x)?;
    let factors = point.factor_refs();
    let (g, c) = partial_contractions(x.data(), x.shape(), &factors);
    let mut out = outer_rank_one(c, &factors)?;
    for (k, gk) in g.into_iter().enumerate() {
        let perp: Vec<f64> = gk.iter().zip(factors[k]).map(|(a, u)| a - c * u).collect();
        accumulate_rank_one(&mut out, &factors, k, &perp);
    }
    Ok(out)
}

fn check_point_shape(point: &SegrePoint, x: &DenseTensor) -> Result<()> {
    if x.shape() != point.shape().as_slice() {
        return Err(invalid(format!(
            "tensor shape {:?} does not match point shape {:?}",
            x.shape(),
            point.shape()
        )));
    }
    Ok(())
}

/// `out += u_1 ⊗ ⋯ ⊗ v ⊗ ⋯ ⊗ u_d` with `v` in slot `k`.
fn accumulate_rank_one(out: &mut DenseTensor, factors: &[&[f64]], k: usize, v: &[f64]) {
    let mut f: Vec<&[f64]> = factors.to_vec();
    f[k] = v;
    let t = outer_rank_one(1.0, &f).expect("factor shapes match");
    out.axpy(1.0, &t).expect("shapes match");
}

/// Orthonormal basis of the tangent space at a Segre point.
///
/// Coordinates are laid out as `[core, mode 0 (p_0 − 1 entries), mode 1, …]`.
/// The core direction is `u_1 ⊗ ⋯ ⊗ u_d`; the mode-`k` directions are
/// `q ⊗_{l≠k} u_l` where `q` runs over a Householder basis of `u_k^⊥`.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    point: SegrePoint,
    complements: Vec<Matrix>,
}

pub fn tangent_basis(point: &SegrePoint) -> TangentBasis {
    TangentBasis {
        complements: point.factors().iter().map(|u| orthogonal_complement(u)).collect(),
        point: point.clone(),
    }
}

impl TangentBasis {
    pub fn point(&self) -> &SegrePoint {
        &self.point
    }

    /// `df = 1 + Σ_l (p_l − 1)`.
    pub fn dim(&self) -> usize {
        self.point.manifold_dim()
    }

    /// `[⟨X, b_j⟩]_j`.
    pub fn coordinates(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        check_point_shape(&self.point, x)?;
        Ok(self.coordinates_raw(x.data(), x.shape()))
    }

    pub(crate) fn coordinates_raw(&self, data: &[f64], shape: &[usize]) -> Vec<f64> {
        let factors = self.point.factor_refs();
        let (g, c) = partial_contractions(data, shape, &factors);
        let mut out = Vec::with_capacity(self.dim());
        out.push(c);
        for (q, gk) in self.complements.iter().zip(&g) {
            for j in 0..q.ncols() {
                out.push(dot(q.column(j).as_slice(), gk));
            }
        }
        out
    }

    /// `Σ_j coords[j] · b_j`.
    pub fn synthesize(&self, coords: &[f64]) -> Result<DenseTensor> {
        if coords.len() != self.dim() {
            return Err(invalid(format!(
                "expected {} tangent coordinates, got {}",
                self.dim(),
                coords.len()
            )));
        }
        let factors = self.point.factor_refs();
        let mut out = outer_rank_one(coords[0], &factors)?;
        let mut offset = 1;
        for (k, q) in self.complements.iter().enumerate() {
            let m = q.ncols();
            let c = DVector::from_column_slice(&coords[offset..offset + m]);
            let v = q * c;
            accumulate_rank_one(&mut out, &factors, k, v.as_slice());
            offset += m;
        }
        Ok(out)
    }

    /// `p_l × p_l` orthogonal frame `[u_l | Q_l]` of mode `l`.
    fn frame(&self, l: usize) -> Matrix {
        let u = &self.point.factors()[l];
        let q = &self.complements[l];
        let mut f = Matrix::zeros(u.len(), u.len());
        f.column_mut(0).copy_from_slice(u);
        f.view_mut((0, 1), (u.len(), q.ncols())).copy_from(q);
        f
    }

    /// Frame column used in each mode by basis vector `j`.
    fn frame_columns(&self, j: usize) -> Vec<usize> {
        let mut cols = vec![0; self.point.order()];
        if j > 0 {
            let mut offset = 1;
            for (k, q) in self.complements.iter().enumerate() {
                if j < offset + q.ncols() {
                    cols[k] = 1 + j - offset;
                    break;
                }
                offset += q.ncols();
            }
        }
        cols
    }

    /// `[⟨a_j, b_k⟩]_{j,k}` between the bases at two points of the same shape.
    /// Every basis tensor is rank one, so each entry is a product over modes.
    pub(crate) fn cross_gram(&self, other: &TangentBasis) -> Matrix {
        let d = self.point.order();
        let cross: Vec<Matrix> = (0..d).map(|l| self.frame(l).transpose() * other.frame(l)).collect();
        let cols_a: Vec<Vec<usize>> = (0..self.dim()).map(|j| self.frame_columns(j)).collect();
        let cols_b: Vec<Vec<usize>> = (0..other.dim()).map(|k| other.frame_columns(k)).collect();
        Matrix::from_fn(self.dim(), other.dim(), |j, k| {
            (0..d).map(|l| cross[l][(cols_a[j][l], cols_b[k][l])]).product()
        })
    }

    /// Materializes all `df` basis tensors.
    pub fn basis_vectors(&self) -> Vec<DenseTensor> {
        let factors = self.point.factor_refs();
        let mut out = Vec::with_capacity(self.dim());
        out.push(outer_rank_one(1.0, &factors).expect("valid factors"));
        for (k, q) in self.complements.iter().enumerate() {
            for j in 0..q.ncols() {
                let col = q.column(j);
                let mut f = factors.clone();
                f[k] = col.as_slice();
                out.push(outer_rank_one(1.0, &f).expect("valid factors"));
            }
        }
        out
    }
}
