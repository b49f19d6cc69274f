use serde::{Deserialize, Serialize};

use super::{CPModel, SegrePoint};
use crate::error::{invalid, Result};
use crate::tensor::dot;

/// Pairwise factor alignment of a CP model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incoherence {
    /// `μ_l = p_l · max_{i≠j} ⟨u_{l,i}, u_{l,j}⟩²`.
    pub mu: Vec<f64>,
    /// `η = max_l sqrt(μ_l / p_l)`.
    pub eta: f64,
}

/// Zero for rank-one models.
pub fn incoherence(model: &CPModel) -> Incoherence {
    let shape = model.shape();
    let comps = model.components();
    let mut mu = vec![0.0; shape.len()];
    for (l, m) in mu.iter_mut().enumerate() {
        let mut best: f64 = 0.0;
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                let c = dot(&comps[i].factors()[l], &comps[j].factors()[l]);
                best = best.max(c * c);
            }
        }
        *m = shape[l] as f64 * best;
    }
    let eta = mu
        .iter()
        .zip(&shape)
        .map(|(m, &p)| (m / p as f64).sqrt())
        .fold(0.0, f64::max);
    Incoherence { mu, eta }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `max_i ‖T̂_{π(i)} − T_i‖_F / |λ_i|` after sign alignment.
    pub max_component_error: f64,
    /// `‖Σ T̂ − Σ T‖_F / ‖Σ T‖_F` on the estimate as given.
    pub relative_error: f64,
    /// `permutation[i]` is the estimate component matched to truth component `i`.
    pub permutation: Vec<usize>,
    /// Whether the matched estimate was negated before measuring its error.
    pub sign_flips: Vec<bool>,
    pub component_errors: Vec<f64>,
    /// Every matched pair already had `⟨T̂, T⟩ ≥ 0`.
    pub sign_aligned: bool,
}

/// Greedy matching on `|⟨T̂_a, T_b⟩| / (‖T̂_a‖ ‖T_b‖)`, largest first, ties to
/// the lowest (truth, estimate) index pair.
pub fn align_and_error(estimate: &CPModel, truth: &CPModel) -> Result<ErrorReport> {
    let r = truth.rank();
    if estimate.rank() != r {
        return Err(invalid(format!(
            "estimate has rank {}, truth has rank {r}",
            estimate.rank()
        )));
    }
    if estimate.shape() != truth.shape() {
        return Err(invalid("estimate and truth shapes differ"));
    }
    let est = estimate.components();
    let tru = truth.components();
    let mut cos = vec![vec![0.0; r]; r];
    for (b, t) in tru.iter().enumerate() {
        for (a, e) in est.iter().enumerate() {
            cos[b][a] = (e.inner(t) / (e.weight() * t.weight())).abs();
        }
    }
    let mut permutation = vec![usize::MAX; r];
    let mut used = vec![false; r];
    for _ in 0..r {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for b in (0..r).filter(|&b| permutation[b] == usize::MAX) {
            for a in (0..r).filter(|&a| !used[a]) {
                if cos[b][a] > best.0 {
                    best = (cos[b][a], b, a);
                }
            }
        }
        permutation[best.1] = best.2;
        used[best.2] = true;
    }

    let mut sign_flips = Vec::with_capacity(r);
    let mut component_errors = Vec::with_capacity(r);
    for (b, t) in tru.iter().enumerate() {
        let e = &est[permutation[b]];
        let flip = e.inner(t) < 0.0;
        let aligned = if flip { e.negated() } else { e.clone() };
        sign_flips.push(flip);
        component_errors.push(component_distance(&aligned, t) / t.weight().abs());
    }
    let sum_truth = truth.embed();
    let diff = estimate.embed().sub(&sum_truth)?;
    Ok(ErrorReport {
        max_component_error: component_errors.iter().copied().fold(0.0, f64::max),
        relative_error: diff.fro_norm() / sum_truth.fro_norm(),
        permutation,
        sign_aligned: !sign_flips.iter().any(|&f| f),
        sign_flips,
        component_errors,
    })
}

/// `‖embed(a) − embed(b)‖_F`, formed densely to keep accuracy for tiny errors.
fn component_distance(a: &SegrePoint, b: &SegrePoint) -> f64 {
    a.embed().sub(&b.embed()).expect("shared shape").fro_norm()
}
