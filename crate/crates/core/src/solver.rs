//! Riemannian gradient descent (RGD) and Riemannian Gauss–Newton (RGN) over a
//! product of `r` Segre manifolds.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::linalg::{lstsq_svd, pinv_solve_sym};
use crate::measurement::MeasurementOp;
use crate::segre::{align_and_error, project_tangent, retract_thosvd_with_info, tangent_basis, CPModel, SegrePoint};
use crate::tensor::{dot, DenseTensor, Matrix};
use crate::trace::{ConvergenceTrace, RowDiagnostics, TraceRow};

/// Observations `y = A(Σ_i T_i) + noise` of a rank-`r` CP tensor.
#[derive(Clone, Debug)]
pub struct Problem {
    pub op: MeasurementOp,
    pub y: Vec<f64>,
    pub rank: usize,
    /// Ground truth, used only for tracing errors.
    pub truth: Option<CPModel>,
}

impl Problem {
    pub fn new(op: MeasurementOp, y: Vec<f64>, rank: usize, truth: Option<CPModel>) -> Result<Self> {
        if y.len() != op.output_len() {
            return Err(invalid(format!(
                "observation length {} does not match operator output {}",
                y.len(),
                op.output_len()
            )));
        }
        if rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        if let Some(t) = &truth {
            if t.rank() != rank || t.shape() != op.shape() {
                return Err(invalid("truth rank or shape does not match the problem"));
            }
        }
        Ok(Self { op, y, rank, truth })
    }

    /// `½ ‖y − A(Σ_i T_i)‖²`.
    pub fn loss(&self, model: &CPModel) -> Result<f64> {
        let fit = self.op.apply(&model.embed())?;
        Ok(0.5 * self.y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub model: CPModel,
    pub iteration: usize,
    /// `y − A(Σ_i embed(T_i))`.
    pub residual: Vec<f64>,
}

impl SolverState {
    pub fn new(problem: &Problem, model: CPModel) -> Result<Self> {
        if model.rank() != problem.rank || model.shape() != problem.op.shape() {
            return Err(invalid("initial model rank or shape does not match the problem"));
        }
        let residual = residual_of(problem, &model)?;
        Ok(Self { model, iteration: 0, residual })
    }

    pub fn residual_norm(&self) -> f64 {
        dot(&self.residual, &self.residual).sqrt()
    }
}

fn residual_of(problem: &Problem, model: &CPModel) -> Result<Vec<f64>> {
    let fit = problem.op.apply(&model.embed())?;
    Ok(problem.y.iter().zip(&fit).map(|(a, b)| a - b).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rgd,
    Rgn,
}

#[derive(Clone)]
pub enum StepSize {
    Constant(f64),
    /// `α_t` as a function of the iteration index.
    Schedule(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl StepSize {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::Schedule(f) => f(t),
        }
    }
}

impl fmt::Debug for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(a) => write!(f, "Constant({a})"),
            Self::Schedule(_) => f.write_str("Schedule(..)"),
        }
    }
}

/// How components see each other's updates within one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpdateOrder {
    /// Every component uses the iterate-`t` residual.
    #[default]
    Jacobi,
    /// The residual is refreshed after each component update.
    GaussSeidel,
    /// One Gauss–Newton least-squares problem over `T_1 ⊕ ⋯ ⊕ T_r` couples all
    /// components. Gradient steps are unaffected and behave as Jacobi.
    Joint,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub method: Method,
    pub step_size: StepSize,
    pub max_iters: usize,
    /// Stop once `|‖r_{t+1}‖ − ‖r_t‖| / ‖r_t‖` falls below this.
    pub stop_tol: f64,
    /// Relative singular-value cutoff in the Gauss–Newton least-squares solve.
    pub pinv_tol: f64,
    pub update_order: UpdateOrder,
    /// With [`UpdateOrder::Joint`], the coupled step is tried only once
    /// `‖r‖ ≤ joint_gate · ‖y‖`.
    pub joint_gate: f64,
    pub record_wall_time: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            step_size: StepSize::Constant(0.2),
            max_iters: 50,
            stop_tol: 1e-12,
            pinv_tol: 1e-10,
            update_order: UpdateOrder::Jacobi,
            joint_gate: 0.5,
            record_wall_time: true,
        }
    }

    pub fn rgd() -> Self {
        Self::new(Method::Rgd)
    }

    pub fn rgn() -> Self {
        Self::new(Method::Rgn)
    }

    pub fn with_step(mut self, alpha: f64) -> Self {
        self.step_size = StepSize::Constant(alpha);
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let StepSize::Constant(a) = self.step_size {
            check_alpha(a)?;
        }
        if !(self.stop_tol > 0.0) || !(self.pinv_tol > 0.0) {
            return Err(invalid("solver tolerances must be positive"));
        }
        if !(self.joint_gate >= 0.0) {
            return Err(invalid("joint_gate must be nonnegative"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("step size must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Flags raised while taking one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepFlags {
    pub rank_deficient: bool,
    pub retraction_tie: bool,
}

/// Riemannian gradient of `½‖y − A(Σ T_j)‖²` with respect to component `i`:
/// `P_{T_i}(A*(A(Σ_j T_j) − y))`.
pub fn riemannian_gradient(state: &SolverState, problem: &Problem, i: usize) -> Result<DenseTensor> {
    let neg = problem.op.adjoint(&state.residual)?;
    Ok(project_tangent(state.model.component(i), &neg)?.scaled(-1.0))
}

pub fn rgd_step(state: &SolverState, problem: &Problem, alpha: f64) -> Result<SolverState> {
    rgd_step_ordered(state, problem, alpha, UpdateOrder::Jacobi).map(|(s, _)| s)
}

fn rgd_step_ordered(
    state: &SolverState,
    problem: &Problem,
    alpha: f64,
    order: UpdateOrder,
) -> Result<(SolverState, StepFlags)> {
    check_alpha(alpha)?;
    let mut model = state.model.clone();
    let mut residual = state.residual.clone();
    let mut flags = StepFlags::default();
    let mut neg_grad = problem.op.adjoint(&residual)?;
    for i in 0..model.rank() {
        let current = state.model.component(i);
        // T_i − α P_i(G) = (1 − α) T_i + α P_i(T_i − G), using P_i T_i = T_i.
        let t = current.embed();
        let pulled = project_tangent(current, &t.add(&neg_grad)?)?;
        let x = t.lin_comb(1.0 - alpha, &pulled, alpha)?;
        let next = retract_component(&x, i, &mut flags)?;
        model.replace(i, next);
        if order == UpdateOrder::GaussSeidel {
            residual = residual_of(problem, &model)?;
            neg_grad = problem.op.adjoint(&residual)?;
        }
    }
    let residual = residual_of(problem, &model)?;
    Ok((SolverState { model, iteration: state.iteration + 1, residual }, flags))
}

pub fn rgn_step(state: &SolverState, problem: &Problem, pinv_tol: f64) -> Result<SolverState> {
    rgn_step_ordered(state, problem, pinv_tol, UpdateOrder::Jacobi).map(|(s, _)| s)
}

fn rgn_step_ordered(
    state: &SolverState,
    problem: &Problem,
    pinv_tol: f64,
    order: UpdateOrder,
) -> Result<(SolverState, StepFlags)> {
    let mut model = state.model.clone();
    let mut residual = state.residual.clone();
    let mut flags = StepFlags::default();
    for i in 0..model.rank() {
        let current = if order == UpdateOrder::GaussSeidel { model.component(i) } else { state.model.component(i) };
        // rhs_i = y − A(Σ_{j≠i} T_j) = residual + A(T_i).
        let own = problem.op.apply(&current.embed())?;
        let rhs: Vec<f64> = residual.iter().zip(&own).map(|(r, a)| r + a).collect();
        let solve = solve_tangent_ls(current, &problem.op, &rhs, pinv_tol)?;
        flags.rank_deficient |= solve.rank < solve.df;
        let next = retract_component(&solve.tensor, i, &mut flags)?;
        model.replace(i, next);
        if order == UpdateOrder::GaussSeidel {
            residual = residual_of(problem, &model)?;
        }
    }
    let residual = residual_of(problem, &model)?;
    Ok((SolverState { model, iteration: state.iteration + 1, residual }, flags))
}

/// Takes the coupled step when `‖r‖ ≤ gate·‖y‖` and it leaves a smaller
/// residual than the Jacobi step; otherwise the Jacobi step.
pub fn rgn_step_joint(state: &SolverState, problem: &Problem, pinv_tol: f64, gate: f64) -> Result<(SolverState, StepFlags)> {
    let jacobi = rgn_step_ordered(state, problem, pinv_tol, UpdateOrder::Jacobi)?;
    if state.residual_norm() > gate * dot(&problem.y, &problem.y).sqrt() {
        return Ok(jacobi);
    }
    let coupled = || -> Result<(SolverState, StepFlags)> {
        let solve = solve_joint_tangent_ls(state.model.components(), &problem.op, &problem.y, pinv_tol)?;
        let mut flags = StepFlags { rank_deficient: solve.rank_deficient(), ..StepFlags::default() };
        let mut model = state.model.clone();
        for (i, x) in solve.tensors.iter().enumerate() {
            let next = retract_component(x, i, &mut flags)?;
            model.replace(i, next);
        }
        let residual = residual_of(problem, &model)?;
        Ok((SolverState { model, iteration: state.iteration + 1, residual }, flags))
    };
    match coupled() {
        Ok(c) if c.0.residual_norm() < jacobi.0.residual_norm() => Ok(c),
        _ => Ok(jacobi),
    }
}

fn retract_component(x: &DenseTensor, i: usize, flags: &mut StepFlags) -> Result<SegrePoint> {
    match retract_thosvd_with_info(x) {
        Ok((p, info)) => {
            flags.retraction_tie |= info.any_tie();
            Ok(p)
        }
        Err(Error::DegenerateInput(reason)) => Err(Error::ComponentCollapsed { component: i, reason }),
        Err(e) => Err(e),
    }
}

/// Solution of the tangent-space least-squares problem.
#[derive(Clone, Debug)]
pub struct TangentSolve {
    pub tensor: DenseTensor,
    /// Tangent coordinates in the orthonormal basis at the point.
    pub coords: Vec<f64>,
    pub rank: usize,
    pub df: usize,
}

impl TangentSolve {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.df
    }
}

/// `argmin_{ξ ∈ T_point} ‖rhs − A(ξ)‖₂`, minimum-norm when the projected
/// design is rank deficient below `pinv_tol · σ_max`.
pub fn solve_tangent_ls(point: &SegrePoint, op: &MeasurementOp, rhs: &[f64], pinv_tol: f64) -> Result<TangentSolve> {
    if rhs.len() != op.output_len() {
        return Err(invalid(format!(
            "right-hand side has length {}, operator expects {}",
            rhs.len(),
            op.output_len()
        )));
    }
    let basis = tangent_basis(point);
    let df = basis.dim();
    match op {
        MeasurementOp::Identity { .. } => {
            // The normal operator restricted to the tangent space is the projector.
            let tensor = project_tangent(point, &op.adjoint(rhs)?)?;
            let coords = basis.coordinates(&tensor)?;
            Ok(TangentSolve { tensor, coords, rank: df, df })
        }
        MeasurementOp::GaussianDesign(g) => {
            let shape = g.shape();
            let mut a = Matrix::zeros(g.n(), df);
            for (m, row) in g.rows().enumerate() {
                let c = basis.coordinates_raw(row, shape);
                for (j, v) in c.into_iter().enumerate() {
                    a[(m, j)] = v;
                }
            }
            let (coords, rank) = lstsq_svd(&a, rhs, pinv_tol);
            let tensor = basis.synthesize(&coords)?;
            Ok(TangentSolve { tensor, coords, rank, df })
        }
    }
}

/// Solution of the coupled least-squares problem over all components.
#[derive(Clone, Debug)]
pub struct JointTangentSolve {
    /// `ξ_i ∈ T_i`, one per component.
    pub tensors: Vec<DenseTensor>,
    /// Concatenated coordinates, component by component.
    pub coords: Vec<f64>,
    pub rank: usize,
    pub df: usize,
}

impl JointTangentSolve {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.df
    }
}

/// `argmin_{ξ_i ∈ T_{points[i]}} ‖rhs − A(Σ_i ξ_i)‖₂`, minimum-norm when the
/// stacked system is rank deficient.
///
/// For the identity operator the normal equations use the exact cross Gram
/// matrix of the tangent bases (eigenvalues below `pinv_tol · max` dropped);
/// for Gaussian designs the stacked `n × Σ df_i` coordinate matrix is solved by
/// SVD with singular values below `pinv_tol · σ_max` dropped.
pub fn solve_joint_tangent_ls(
    points: &[SegrePoint],
    op: &MeasurementOp,
    rhs: &[f64],
    pinv_tol: f64,
) -> Result<JointTangentSolve> {
    if points.is_empty() {
        return Err(invalid("at least one point is required"));
    }
    if rhs.len() != op.output_len() {
        return Err(invalid(format!(
            "right-hand side has length {}, operator expects {}",
            rhs.len(),
            op.output_len()
        )));
    }
    if points.iter().any(|p| p.shape() != op.shape()) {
        return Err(invalid("point shape does not match the operator"));
    }
    let bases: Vec<_> = points.iter().map(tangent_basis).collect();
    let dims: Vec<usize> = bases.iter().map(|b| b.dim()).collect();
    let offsets: Vec<usize> = dims.iter().scan(0, |acc, &d| { let o = *acc; *acc += d; Some(o) }).collect();
    let df: usize = dims.iter().sum();
    let shape = op.shape();
    let (coords, rank) = match op {
        MeasurementOp::Identity { .. } => {
            let mut gram = Matrix::zeros(df, df);
            let mut b = Vec::with_capacity(df);
            for (i, bi) in bases.iter().enumerate() {
                b.extend(bi.coordinates_raw(rhs, shape));
                for (j, bj) in bases.iter().enumerate().skip(i) {
                    let g = if i == j { Matrix::identity(dims[i], dims[i]) } else { bi.cross_gram(bj) };
                    gram.view_mut((offsets[i], offsets[j]), (dims[i], dims[j])).copy_from(&g);
                    if i != j {
                        gram.view_mut((offsets[j], offsets[i]), (dims[j], dims[i])).copy_from(&g.transpose());
                    }
                }
            }
            pinv_solve_sym(&gram, &b, pinv_tol)
        }
        MeasurementOp::GaussianDesign(g) => {
            let mut a = Matrix::zeros(g.n(), df);
            for (m, row) in g.rows().enumerate() {
                for (basis, &o) in bases.iter().zip(&offsets) {
                    for (j, v) in basis.coordinates_raw(row, shape).into_iter().enumerate() {
                        a[(m, o + j)] = v;
                    }
                }
            }
            lstsq_svd(&a, rhs, pinv_tol)
        }
    };
    let tensors = bases
        .iter()
        .zip(offsets.iter().zip(&dims))
        .map(|(basis, (&o, &d))| basis.synthesize(&coords[o..o + d]))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointTangentSolve { tensors, coords, rank, df })
}

/// A run that stopped on an error, with everything computed before it.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: Error,
    pub model: CPModel,
    pub trace: ConvergenceTrace,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solver stopped after {} trace rows: {}", self.trace.len(), self.error)
    }
}

impl std::error::Error for SolveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SolveFailure> for Error {
    fn from(f: SolveFailure) -> Self {
        f.error
    }
}

pub fn run(
    problem: &Problem,
    config: &SolverConfig,
    init: CPModel,
) -> std::result::Result<(CPModel, ConvergenceTrace), SolveFailure> {
    let mut trace = ConvergenceTrace::default();
    let fail = |error, model, trace| SolveFailure { error, model, trace };
    if let Err(e) = config.validate() {
        return Err(fail(e, init, trace));
    }
    let mut state = match SolverState::new(problem, init.clone()) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, init, trace)),
    };
    let start = Instant::now();
    let record = |trace: &mut ConvergenceTrace, state: &SolverState, flags: StepFlags| -> Result<()> {
        let wall_ms = if config.record_wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let (row, diag) = trace_row(problem, state, wall_ms, flags)?;
        trace.push(row, diag);
        Ok(())
    };
    if let Err(e) = record(&mut trace, &state, StepFlags::default()) {
        return Err(fail(e, state.model, trace));
    }
    for t in 0..config.max_iters {
        let before = state.residual_norm();
        let step = match config.method {
            Method::Rgd => rgd_step_ordered(&state, problem, config.step_size.at(t), config.update_order),
            Method::Rgn if config.update_order == UpdateOrder::Joint => {
                rgn_step_joint(&state, problem, config.pinv_tol, config.joint_gate)
            }
            Method::Rgn => rgn_step_ordered(&state, problem, config.pinv_tol, config.update_order),
        };
        let flags = match step {
            Ok((next, flags)) => {
                state = next;
                flags
            }
            Err(e) => return Err(fail(e, state.model, trace)),
        };
        if let Err(e) = record(&mut trace, &state, flags) {
            return Err(fail(e, state.model, trace));
        }
        let after = state.residual_norm();
        let change = (after - before).abs();
        if change == 0.0 || change < config.stop_tol * before {
            break;
        }
    }
    Ok((state.model, trace))
}

pub(crate) fn trace_row(problem: &Problem, state: &SolverState, wall_ms: f64, flags: StepFlags) -> Result<(TraceRow, RowDiagnostics)> {
    let (rel, comp, aligned) = match &problem.truth {
        Some(truth) => {
            let rep = align_and_error(&state.model, truth)?;
            (rep.relative_error, rep.max_component_error, Some(rep.sign_aligned))
        }
        None => (f64::NAN, f64::NAN, None),
    };
    Ok((
        TraceRow {
            iter: state.iteration,
            rel_fro_err: rel,
            max_comp_err: comp,
            residual: state.residual_norm(),
            wall_ms,
        },
        RowDiagnostics {
            sign_aligned: aligned,
            rank_deficient: flags.rank_deficient,
            retraction_tie: flags.retraction_tie,
        },
    ))
}
