//! Small dense kernels: leading singular vectors, sign canonicalization,
//! orthogonal complements and pseudo-inverse solves.

use nalgebra::{DVector, SymmetricEigen};

use crate::tensor::{dot, norm, Matrix};

pub(crate) const POWER_TOL: f64 = 1e-12;
pub(crate) const POWER_MAX_ITERS: usize = 500;
/// Relative gap below which the two leading singular values count as tied.
pub(crate) const TIE_TOL: f64 = 1e-12;

/// How a leading singular vector was obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LeadingVectorInfo {
    pub iterations: usize,
    /// Power iteration did not converge and a full eigendecomposition was used.
    pub fell_back: bool,
    /// The two leading singular values coincide; the lowest-index tie-break applied.
    pub tie: bool,
    /// Squared leading singular value.
    pub sigma_sq: f64,
}

/// Leading eigenvector of a symmetric PSD Gram matrix `M Mᵀ`, i.e. the
/// leading left singular vector of `M`.
///
/// Power iteration (tolerance 1e-12, at most 500 steps) started from the
/// column of largest diagonal; falls back to a full symmetric eigensolve on
/// non-convergence. Returns `None` when the Gram matrix is zero.
pub(crate) fn leading_eigvec(gram: &Matrix) -> Option<(Vec<f64>, LeadingVectorInfo)> {
    let p = gram.nrows();
    let (start, &dmax) = gram
        .diagonal()
        .as_slice()
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |best, (i, v)| if *v > *best.1 { (i, v) } else { best });
    if !(dmax > 0.0) || !dmax.is_finite() {
        return None;
    }
    if p == 1 {
        return Some((vec![1.0], LeadingVectorInfo { sigma_sq: dmax, ..Default::default() }));
    }
    let mut v: Vec<f64> = gram.column(start).iter().copied().collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut next = vec![0.0; p];
    for it in 1..=POWER_MAX_ITERS {
        mat_vec_sym(gram, &v, &mut next);
        let nn = norm(&next);
        if !(nn > 0.0) {
            break;
        }
        next.iter_mut().for_each(|x| *x /= nn);
        let delta: f64 = v.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut next);
        if delta <= POWER_TOL {
            mat_vec_sym(gram, &v, &mut next);
            let sigma_sq = dot(&v, &next);
            // λ_2 ≤ trace − λ_1, so a tie is only possible when this fails.
            if gram.trace() - sigma_sq < (1.0 - TIE_TOL) * sigma_sq {
                return Some((v, LeadingVectorInfo { iterations: it, sigma_sq, ..Default::default() }));
            }
            let (w, top, tie) = eig_fallback(gram);
            if tie {
                return Some((w, LeadingVectorInfo { iterations: it, fell_back: true, tie, sigma_sq: top }));
            }
            return Some((v, LeadingVectorInfo { iterations: it, sigma_sq, ..Default::default() }));
        }
    }
    let (v, sigma_sq, tie) = eig_fallback(gram);
    Some((v, LeadingVectorInfo { iterations: POWER_MAX_ITERS, fell_back: true, tie, sigma_sq }))
}

fn mat_vec_sym(g: &Matrix, v: &[f64], out: &mut [f64]) {
    // Column-major: column j of a symmetric matrix is its row j.
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(g.column(j).as_slice(), v);
    }
}

/// Full eigensolve. On a tie the lowest-index coordinate axis projected onto
/// the leading eigenspace picks the representative.
fn eig_fallback(gram: &Matrix) -> (Vec<f64>, f64, bool) {
    let eig = SymmetricEigen::new(gram.clone());
    let mut order: Vec<usize> = (0..gram.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let tied: Vec<usize> = order
        .iter()
        .copied()
        .take_while(|&i| top - eig.eigenvalues[i] <= TIE_TOL * top.abs())
        .collect();
    if tied.len() == 1 {
        return (eig.eigenvectors.column(order[0]).iter().copied().collect(), top, false);
    }
    let p = gram.nrows();
    for axis in 0..p {
        let mut v = vec![0.0; p];
        for &i in &tied {
            let col = eig.eigenvectors.column(i);
            let c = col[axis];
            for (vj, cj) in v.iter_mut().zip(col.iter()) {
                *vj += c * cj;
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return (v, top, true);
        }
    }
    (eig.eigenvectors.column(order[0]).iter().copied().collect(), top, true)
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is
/// positive. Returns the sign that was applied.
pub(crate) fn canonicalize_sign(v: &mut [f64]) -> f64 {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
        -1.0
    } else {
        1.0
    }
}

/// Orthonormal basis (as columns) of the orthogonal complement of the unit
/// vector `u`, taken from a Householder reflector that maps `u` to `±e_1`.
pub(crate) fn orthogonal_complement(u: &[f64]) -> Matrix {
    let p = u.len();
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    // H = I - 2 w wᵀ/(wᵀw), w = u + s e_1; H e_j for j ≥ 1 spans u^⊥.
    let mut w = u.to_vec();
    w[0] += s;
    let ww = dot(&w, &w);
    let mut q = Matrix::zeros(p, p - 1);
    for j in 1..p {
        let c = 2.0 * w[j] / ww;
        for i in 0..p {
            let e = if i == j { 1.0 } else { 0.0 };
            q[(i, j - 1)] = e - c * w[i];
        }
    }
    q
}

/// Minimum-norm solution of `G x = b` for symmetric PSD `G`, dropping
/// eigenvalues below `rel_tol · λ_max`. Returns `(x, retained rank)`.
pub(crate) fn pinv_solve_sym(g: &Matrix, b: &[f64], rel_tol: f64) -> (Vec<f64>, usize) {
    let eig = SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let cutoff = rel_tol * lmax;
    let bv = DVector::from_column_slice(b);
    let mut x = DVector::zeros(b.len());
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cutoff && l > 0.0 {
            let q = eig.eigenvectors.column(i);
            x += q * (q.dot(&bv) / l);
            rank += 1;
        }
    }
    (x.as_slice().to_vec(), rank)
}

/// Minimum-norm least-squares solution of `A x ≈ b` through the SVD of `A`,
/// dropping singular values below `rel_tol · σ_max`. Returns `(x, retained rank)`.
pub(crate) fn lstsq_svd(a: &Matrix, b: &[f64], rel_tol: f64) -> (Vec<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = rel_tol * smax;
    let bv = DVector::from_column_slice(b);
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let c = u.column(i).dot(&bv) / s;
            x += vt.row(i).transpose() * c;
            rank += 1;
        }
    }
    (x.as_slice().to_vec(), rank)
}

/// Top-`r` singular triples of `m`, sorted by decreasing singular value.
pub(crate) fn top_svd(m: &Matrix, r: usize) -> (Matrix, Vec<f64>, Matrix) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let r = r.min(order.len());
    let mut uu = Matrix::zeros(m.nrows(), r);
    let mut vv = Matrix::zeros(m.ncols(), r);
    let mut s = Vec::with_capacity(r);
    for (j, &i) in order.iter().take(r).enumerate() {
        uu.set_column(j, &u.column(i));
        vv.set_column(j, &vt.row(i).transpose());
        s.push(svd.singular_values[i]);
    }
    (uu, s, vv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_finds_top_eigvec() {
        let m = Matrix::from_row_slice(3, 4, &[3.0, 1.0, 0.0, 2.0, -1.0, 0.5, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let g = &m * m.transpose();
        let (v, info) = leading_eigvec(&g).unwrap();
        let (u, s, _) = top_svd(&m, 1);
        let align = dot(&v, u.column(0).as_slice()).abs();
        assert!((align - 1.0).abs() < 1e-12);
        assert!((info.sigma_sq - s[0] * s[0]).abs() < 1e-10);
        assert!(!info.fell_back);
    }

    #[test]
    fn tie_uses_lowest_axis() {
        let g = Matrix::identity(3, 3);
        let (v, info) = leading_eigvec(&g).unwrap();
        assert!(info.tie);
        assert!((v[0].abs() - 1.0).abs() < 1e-12);
        let (v2, _, tie) = eig_fallback(&Matrix::from_diagonal_element(3, 3, 2.0));
        assert!(tie);
        assert!((v2[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gram_has_no_vector() {
        assert!(leading_eigvec(&Matrix::zeros(3, 3)).is_none());
    }

    #[test]
    fn sign_canonicalization() {
        let mut v = vec![0.1, -0.9, 0.3];
        assert_eq!(canonicalize_sign(&mut v), -1.0);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
        let mut w = vec![-0.5, 0.5];
        assert_eq!(canonicalize_sign(&mut w), -1.0);
    }

    #[test]
    fn complement_is_orthonormal() {
        for u in [vec![1.0, 0.0, 0.0], vec![-0.6, 0.8, 0.0], vec![0.5, 0.5, 0.5, -0.5]] {
            let q = orthogonal_complement(&u);
            let ut = DVector::from_column_slice(&u);
            assert!((q.transpose() * &q - Matrix::identity(u.len() - 1, u.len() - 1)).norm() < 1e-14);
            assert!((q.transpose() * ut).norm() < 1e-14);
        }
    }

    #[test]
    fn lstsq_matches_normal_equations_and_drops_null_columns() {
        let a = Matrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 3.0, 1.0, 0.0]);
        let b = [1.0, 2.0, 3.0, 4.0];
        let (x, rank) = lstsq_svd(&a, &b, 1e-10);
        assert_eq!(rank, 2);
        assert_eq!(x[2], 0.0);
        let r: Vec<f64> = (0..4).map(|i| b[i] - (0..3).map(|j| a[(i, j)] * x[j]).sum::<f64>()).collect();
        for j in 0..3 {
            assert!((0..4).map(|i| a[(i, j)] * r[i]).sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn pinv_drops_null_directions() {
        let g = Matrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0]));
        let (x, rank) = pinv_solve_sym(&g, &[4.0, 2.0, 7.0], 1e-10);
        assert_eq!(rank, 2);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14 && x[2] == 0.0);
    }
}
