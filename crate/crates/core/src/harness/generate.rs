use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::{ExperimentConfig, FactorLaw, Task, WeightLaw};
use crate::error::{invalid, Result};
use crate::init::random_unit;
use crate::measurement::{GaussianDesign, GaussianDesignSpec, MeasurementOp};
use crate::rng::{stream_id, substream, Purpose};
use crate::segre::CPModel;
use crate::solver::Problem;
use crate::tensor::{DenseTensor, Matrix};

/// `p × r` matrix whose unit columns have Gram matrix `G_ij = ρ^{|i−j|}`,
/// before any rotation: the Cholesky factor of `G` stacked over zero rows.
pub fn ar1_factors(p: usize, r: usize, rho: f64) -> Result<Matrix> {
    if r == 0 || r > p {
        return Err(invalid(format!("need 1 ≤ r ≤ p, got r = {r}, p = {p}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    let gram = Matrix::from_fn(r, r, |i, j| rho.powi(i.abs_diff(j) as i32));
    let chol = gram.cholesky().ok_or_else(|| invalid("AR(1) Gram matrix is not positive definite"))?;
    let lt = chol.l().transpose();
    let mut u = Matrix::zeros(p, r);
    u.view_mut((0, 0), (r, r)).copy_from(&lt);
    for mut col in u.column_iter_mut() {
        let n = col.norm();
        col /= n;
    }
    Ok(u)
}

/// Haar-distributed orthogonal `p × p` matrix: QR of a Gaussian matrix with
/// the signs of `diag(R)` folded into `Q`.
pub fn haar_rotation(p: usize, rng: &mut impl Rng) -> Matrix {
    let g = Matrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// AR(1)-coherent factors followed by a seeded Haar rotation of `ℝ^p`.
pub fn gen_coherent_factors(p: usize, r: usize, rho: f64, rng: &mut impl Rng) -> Result<Matrix> {
    let u = ar1_factors(p, r, rho)?;
    Ok(haar_rotation(p, rng) * u)
}

fn sphere_factors(p: usize, r: usize, rng: &mut impl Rng) -> Matrix {
    let cols: Vec<_> = (0..r).map(|_| nalgebra::DVector::from_vec(random_unit(rng, p))).collect();
    Matrix::from_columns(&cols)
}

/// Component weights in decreasing order.
pub fn gen_weights(config: &ExperimentConfig, rng: &mut impl Rng) -> Vec<f64> {
    let d = config.order() as f64;
    let p_bar = config.p_bar() as f64;
    let r = config.rank;
    let mut w: Vec<f64> = match config.weights {
        WeightLaw::UnifScaled => {
            let (lo, hi) = match config.task {
                Task::Decompose => (p_bar.powf(0.75), 2.0 * p_bar.powf(0.75)),
                Task::Regress => (0.5, 1.5),
            };
            let law = Uniform::new(lo, hi).expect("valid bounds");
            (0..r).map(|_| (d.sqrt() + 1.0) * law.sample(rng)).collect()
        }
        WeightLaw::GeometricKappa => (1..=r)
            .map(|i| match config.task {
                Task::Decompose => 2.0 * config.kappa.powf((i as f64 - 1.0) / 2.0) * p_bar.powf(0.75) * (r as f64).sqrt(),
                Task::Regress => 2.0 * config.kappa.powf((i as f64 - 2.0) / 2.0),
            })
            .collect(),
    };
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

/// Ground-truth CP model for one replicate.
pub fn gen_truth(config: &ExperimentConfig, replicate: u64) -> Result<CPModel> {
    config.validate()?;
    let mut frng = substream(config.seed, Purpose::Factors, replicate);
    let mut rot = substream(config.seed, Purpose::Rotation, replicate);
    let factors = config
        .dims
        .iter()
        .map(|&p| match config.factors {
            FactorLaw::Sphere => Ok(sphere_factors(p, config.rank, &mut frng)),
            FactorLaw::Ar1 => gen_coherent_factors(p, config.rank, config.rho, &mut rot),
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = gen_weights(config, &mut substream(config.seed, Purpose::Weights, replicate));
    CPModel::from_factor_matrices(&weights, &factors)
}

/// Observations for one replicate. Regression uses rescaled designs, so both
/// `y` and the noise are divided by `√n·σ`.
pub fn gen_instance(config: &ExperimentConfig, replicate: u64) -> Result<Problem> {
    let truth = gen_truth(config, replicate)?;
    let signal = truth.embed();
    let mut noise_rng = substream(config.seed, Purpose::Noise, replicate);
    let mut noise = |len: usize, scale: f64| -> Vec<f64> {
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                scale * z
            })
            .collect()
    };
    match config.task {
        Task::Decompose => {
            let mut y = signal.data().to_vec();
            if config.noise_sd > 0.0 {
                let e = noise(y.len(), config.noise_sd);
                y.iter_mut().zip(e).for_each(|(a, e)| *a += e);
            }
            let op = MeasurementOp::identity(&config.dims)?;
            Problem::new(op, y, config.rank, Some(truth))
        }
        Task::Regress => {
            let n = config.sample_size();
            let spec = GaussianDesignSpec {
                seed: config.seed,
                stream: stream_id(Purpose::Design, replicate),
                shape: config.dims.clone(),
                n,
                sigma: config.design_sigma,
            };
            let op = MeasurementOp::GaussianDesign(GaussianDesign::generate(&spec, true)?);
            let mut y = op.apply(&signal)?;
            if config.noise_sd > 0.0 {
                let scale = config.noise_sd / ((n as f64).sqrt() * config.design_sigma);
                y.iter_mut().zip(noise(n, scale)).for_each(|(a, e)| *a += e);
            }
            Problem::new(op, y, config.rank, Some(truth))
        }
    }
}

/// Observed tensor of a decomposition instance.
pub fn observed_tensor(problem: &Problem) -> Result<DenseTensor> {
    match &problem.op {
        MeasurementOp::Identity { shape } => DenseTensor::new(shape.clone(), problem.y.clone()),
        MeasurementOp::GaussianDesign(_) => Err(invalid("regression instances have no observed tensor")),
    }
}
