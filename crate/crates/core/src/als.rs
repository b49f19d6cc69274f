//! Plain CP alternating least squares for decomposition and regression.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::linalg::pinv_solve_sym;
use crate::measurement::MeasurementOp;
use crate::segre::{CPModel, SegrePoint};
use crate::solver::{trace_row, Problem, SolveFailure, SolverState, StepFlags};
use crate::tensor::{contract_except, DenseTensor, Matrix};
use crate::trace::ConvergenceTrace;

#[derive(Clone, Debug)]
pub struct AlsConfig {
    pub sweeps: usize,
    /// Relative eigenvalue cutoff when the normal matrix is singular.
    pub pinv_tol: f64,
    pub record_wall_time: bool,
}

impl AlsConfig {
    pub fn new(sweeps: usize) -> Self {
        Self { sweeps, pinv_tol: 1e-12, record_wall_time: true }
    }
}

/// Decomposition ALS on the tensor `y`; `truth` only feeds the trace.
pub fn cp_als_decompose(
    y: &DenseTensor,
    init: CPModel,
    sweeps: usize,
    truth: Option<&CPModel>,
) -> std::result::Result<(CPModel, ConvergenceTrace), SolveFailure> {
    let problem = Problem::new(
        MeasurementOp::Identity { shape: y.shape().to_vec() },
        y.data().to_vec(),
        init.rank(),
        truth.cloned(),
    )
    .map_err(|e| failure(e, init.clone(), ConvergenceTrace::default()))?;
    cp_als(&problem, init, &AlsConfig::new(sweeps))
}

/// Regression ALS against a Gaussian design ensemble.
pub fn cp_als_regress(
    op: &MeasurementOp,
    y: &[f64],
    init: CPModel,
    sweeps: usize,
    truth: Option<&CPModel>,
) -> std::result::Result<(CPModel, ConvergenceTrace), SolveFailure> {
    let problem = Problem::new(op.clone(), y.to_vec(), init.rank(), truth.cloned())
        .map_err(|e| failure(e, init.clone(), ConvergenceTrace::default()))?;
    cp_als(&problem, init, &AlsConfig::new(sweeps))
}

fn failure(error: Error, model: CPModel, trace: ConvergenceTrace) -> SolveFailure {
    SolveFailure { error, model, trace }
}

/// One trace row per sweep, after all `d` mode updates.
pub fn cp_als(
    problem: &Problem,
    init: CPModel,
    config: &AlsConfig,
) -> std::result::Result<(CPModel, ConvergenceTrace), SolveFailure> {
    let mut trace = ConvergenceTrace::default();
    let start = Instant::now();
    let wall = || if config.record_wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let mut state = match SolverState::new(problem, init.clone()) {
        Ok(s) => s,
        Err(e) => return Err(failure(e, init, trace)),
    };
    match trace_row(problem, &state, wall(), StepFlags::default()) {
        Ok((row, diag)) => trace.push(row, diag),
        Err(e) => return Err(failure(e, state.model, trace)),
    }
    for _ in 0..config.sweeps {
        let mut flags = StepFlags::default();
        let mut model = state.model.clone();
        for k in 0..model.order() {
            let update = match &problem.op {
                MeasurementOp::Identity { shape } => {
                    let y = DenseTensor::new(shape.clone(), problem.y.clone()).expect("validated shape");
                    update_mode_decompose(&y, &model, k, config.pinv_tol)
                }
                MeasurementOp::GaussianDesign(_) => update_mode_regress(problem, &model, k, config.pinv_tol),
            };
            match update {
                Ok((next, deficient)) => {
                    flags.rank_deficient |= deficient;
                    model = next;
                }
                Err(e) => return Err(failure(e, state.model, trace)),
            }
        }
        state = match SolverState::new(problem, model) {
            Ok(mut s) => {
                s.iteration = state.iteration + 1;
                s
            }
            Err(e) => return Err(failure(e, state.model, trace)),
        };
        match trace_row(problem, &state, wall(), flags) {
            Ok((row, diag)) => trace.push(row, diag),
            Err(e) => return Err(failure(e, state.model, trace)),
        }
    }
    Ok((state.model, trace))
}

/// `A_k = M (⊛_{l≠k} U_lᵀ U_l)⁻¹` with `M` the MTTKRP of mode `k`.
fn update_mode_decompose(y: &DenseTensor, model: &CPModel, k: usize, pinv_tol: f64) -> Result<(CPModel, bool)> {
    let r = model.rank();
    let pk = y.shape()[k];
    let mut h = Matrix::from_element(r, r, 1.0);
    for l in (0..model.order()).filter(|&l| l != k) {
        let u = model.factor_matrix(l);
        h.component_mul_assign(&(u.transpose() * &u));
    }
    let mut mttkrp = Matrix::zeros(r, pk);
    for (i, c) in model.components().iter().enumerate() {
        let m = contract_except(y.data(), y.shape(), &c.factor_refs(), k);
        mttkrp.row_mut(i).copy_from_slice(&m);
    }
    // Solve H Aᵀ = Mᵀ column by column.
    let mut a = Matrix::zeros(pk, r);
    let mut deficient = false;
    match h.clone().cholesky() {
        Some(ch) => {
            let sol = ch.solve(&mttkrp);
            a.copy_from(&sol.transpose());
        }
        None => {
            deficient = true;
            for row in 0..pk {
                let b: Vec<f64> = mttkrp.column(row).iter().copied().collect();
                let (x, _) = pinv_solve_sym(&h, &b, pinv_tol);
                for i in 0..r {
                    a[(row, i)] = x[i];
                }
            }
        }
    }
    Ok((with_mode(model, k, &a)?, deficient))
}

/// Least squares in `vec(A_k)`: design row `m` is `[z_{m,1}; …; z_{m,r}]`
/// with `z_{m,i} = X_m ×_{l≠k} u_{l,i}`.
fn update_mode_regress(problem: &Problem, model: &CPModel, k: usize, pinv_tol: f64) -> Result<(CPModel, bool)> {
    let MeasurementOp::GaussianDesign(g) = &problem.op else {
        return Err(invalid("regression ALS needs a Gaussian design operator"));
    };
    let shape = g.shape();
    let pk = shape[k];
    let r = model.rank();
    let cols = pk * r;
    let mut gram = Matrix::zeros(cols, cols);
    let mut rhs = DVector::zeros(cols);
    let refs: Vec<Vec<&[f64]>> = model.components().iter().map(|c| c.factor_refs()).collect();
    let mut z = DVector::zeros(cols);
    for (row, &ym) in g.rows().zip(&problem.y) {
        for (i, f) in refs.iter().enumerate() {
            let zi = contract_except(row, shape, f, k);
            z.rows_mut(i * pk, pk).copy_from_slice(&zi);
        }
        gram.ger(1.0, &z, &z, 1.0);
        rhs.axpy(ym, &z, 1.0);
    }
    let (x, rank) = pinv_solve_sym(&gram, rhs.as_slice(), pinv_tol);
    let a = Matrix::from_fn(pk, r, |row, i| x[i * pk + row]);
    Ok((with_mode(model, k, &a)?, rank < cols))
}

/// Replaces the mode-`k` factors by the normalized columns of `a`, whose
/// norms become the weights.
fn with_mode(model: &CPModel, k: usize, a: &Matrix) -> Result<CPModel> {
    let comps = model
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut factors = c.factors().to_vec();
            factors[k] = a.column(i).iter().copied().collect();
            SegrePoint::from_unnormalized(1.0, factors).map_err(|e| match e {
                Error::DegenerateInput(reason) => Error::ComponentCollapsed { component: i, reason },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CPModel::new(comps)
}
