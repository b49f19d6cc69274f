use super::SegrePoint;
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_sign, leading_eigvec, LeadingVectorInfo};
use crate::tensor::{contract_all, mode_gram_raw, norm, DenseTensor};

/// Per-mode record of how the leading singular vectors were computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RetractionInfo {
    pub modes: Vec<LeadingVectorInfo>,
}

impl RetractionInfo {
    pub fn any_tie(&self) -> bool {
        self.modes.iter().any(|m| m.tie)
    }

    pub fn any_fallback(&self) -> bool {
        self.modes.iter().any(|m| m.fell_back)
    }
}

/// Rank-one truncated HOSVD: `u_l` is the leading left singular vector of
/// the mode-`l` unfolding (sign-canonical), `λ = ⟨X, u_1 ⊗ ⋯ ⊗ u_d⟩`.
pub fn retract_thosvd(x: &DenseTensor) -> Result<SegrePoint> {
    retract_thosvd_with_info(x).map(|(p, _)| p)
}

pub fn retract_thosvd_with_info(x: &DenseTensor) -> Result<(SegrePoint, RetractionInfo)> {
    let n = x.fro_norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "cannot retract a tensor with norm {n}"
        )));
    }
    let (factors, modes) = leading_vectors_raw(x.data(), x.shape())
        .ok_or_else(|| Error::DegenerateInput("a mode unfolding vanished".into()))?;
    let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
    let weight = contract_all(x.data(), x.shape(), &refs);
    if weight == 0.0 || !weight.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "rank-one weight {weight} after retraction"
        )));
    }
    Ok((SegrePoint::from_parts_unchecked(weight, factors), RetractionInfo { modes }))
}

/// Sign-canonical leading left singular vector of every mode unfolding of a
/// row-major tensor of any order ≥ 1.
pub(crate) fn leading_vectors_raw(data: &[f64], shape: &[usize]) -> Option<(Vec<Vec<f64>>, Vec<LeadingVectorInfo>)> {
    let mut factors = Vec::with_capacity(shape.len());
    let mut infos = Vec::with_capacity(shape.len());
    for l in 0..shape.len() {
        let gram = mode_gram_raw(data, shape, l);
        let (mut v, info) = leading_eigvec(&gram)?;
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        canonicalize_sign(&mut v);
        factors.push(v);
        infos.push(info);
    }
    Some((factors, infos))
}
