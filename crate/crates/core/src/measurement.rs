//! Linear observation operators: the identity (decomposition) and Gaussian
//! design ensembles (regression).

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::from_stream;
use crate::tensor::{axpy, check_shape, dot, DenseTensor};

/// Everything needed to regenerate a Gaussian design ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDesignSpec {
    pub seed: u64,
    pub stream: u64,
    pub shape: Vec<usize>,
    pub n: usize,
    pub sigma: f64,
}

/// `n` design tensors held densely, one row-major tensor per row.
///
/// With `rescaled` set the rows are stored divided by `√n·σ`, so `adjoint` is
/// the literal transpose of `apply` and `adjoint ∘ apply = (1/(nσ²)) Σ ⟨X_m,·⟩ X_m`.
/// Without it the rows hold the raw draws and the `1/(nσ²)` factor is applied
/// inside `adjoint`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDesign {
    source: DesignSource,
    shape: Vec<usize>,
    n: usize,
    sigma: f64,
    rescaled: bool,
    rows: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
enum DesignSource {
    Seeded { seed: u64, stream: u64 },
    Explicit,
}

impl GaussianDesign {
    /// Draws i.i.d. `N(0, σ²)` entries, design by design in storage order.
    pub fn generate(spec: &GaussianDesignSpec, rescaled: bool) -> Result<Self> {
        let len = check_shape(&spec.shape)?;
        check_design_params(spec.n, spec.sigma)?;
        let mut rng = from_stream(spec.seed, spec.stream);
        let rows: Vec<f64> = (0..spec.n * len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * spec.sigma
            })
            .collect();
        Ok(Self::assemble(
            DesignSource::Seeded { seed: spec.seed, stream: spec.stream },
            spec.shape.clone(),
            spec.n,
            spec.sigma,
            rescaled,
            rows,
        ))
    }

    /// Wraps caller-supplied raw designs.
    pub fn from_designs(designs: &[DenseTensor], sigma: f64, rescaled: bool) -> Result<Self> {
        let first = designs.first().ok_or_else(|| invalid("at least one design is required"))?;
        check_design_params(designs.len(), sigma)?;
        let mut rows = Vec::with_capacity(designs.len() * first.len());
        for d in designs {
            first.check_same_shape(d)?;
            rows.extend_from_slice(d.data());
        }
        Ok(Self::assemble(DesignSource::Explicit, first.shape().to_vec(), designs.len(), sigma, rescaled, rows))
    }

    fn assemble(source: DesignSource, shape: Vec<usize>, n: usize, sigma: f64, rescaled: bool, mut rows: Vec<f64>) -> Self {
        if rescaled {
            let s = (n as f64).sqrt() * sigma;
            rows.iter_mut().for_each(|x| *x /= s);
        }
        Self { source, shape, n, sigma, rescaled, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rescaled(&self) -> bool {
        self.rescaled
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Seed and stream when the designs were generated, `None` for explicit designs.
    pub fn spec(&self) -> Option<GaussianDesignSpec> {
        match self.source {
            DesignSource::Seeded { seed, stream } => Some(GaussianDesignSpec {
                seed,
                stream,
                shape: self.shape.clone(),
                n: self.n,
                sigma: self.sigma,
            }),
            DesignSource::Explicit => None,
        }
    }

    /// Stored row `m` (rescaled when the flag is set).
    pub fn design(&self, m: usize) -> &[f64] {
        let len = self.rows.len() / self.n;
        &self.rows[m * len..(m + 1) * len]
    }

    pub(crate) fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.rows.len() / self.n)
    }

    fn adjoint_scale(&self) -> f64 {
        if self.rescaled {
            1.0
        } else {
            1.0 / (self.n as f64 * self.sigma * self.sigma)
        }
    }
}

fn check_design_params(n: usize, sigma: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("a design ensemble needs n ≥ 1"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("design scale must be positive, got {sigma}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasurementOp {
    Identity { shape: Vec<usize> },
    GaussianDesign(GaussianDesign),
}

impl MeasurementOp {
    pub fn identity(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self::Identity { shape: shape.to_vec() })
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Self::Identity { shape } => shape,
            Self::GaussianDesign(g) => &g.shape,
        }
    }

    /// Length of `apply`'s output.
    pub fn output_len(&self) -> usize {
        match self {
            Self::Identity { shape } => shape.iter().product(),
            Self::GaussianDesign(g) => g.n,
        }
    }

    pub fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>> {
        self.check_tensor(t)?;
        Ok(match self {
            Self::Identity { .. } => t.data().to_vec(),
            Self::GaussianDesign(g) => g.rows().map(|row| dot(row, t.data())).collect(),
        })
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<DenseTensor> {
        if y.len() != self.output_len() {
            return Err(invalid(format!(
                "observation vector has length {}, operator expects {}",
                y.len(),
                self.output_len()
            )));
        }
        match self {
            Self::Identity { shape } => DenseTensor::new(shape.clone(), y.to_vec()),
            Self::GaussianDesign(g) => {
                let mut out = vec![0.0; g.rows.len() / g.n];
                for (row, &ym) in g.rows().zip(y) {
                    axpy(ym, row, &mut out);
                }
                let s = g.adjoint_scale();
                if s != 1.0 {
                    out.iter_mut().for_each(|x| *x *= s);
                }
                DenseTensor::new(g.shape.clone(), out)
            }
        }
    }

    /// `adjoint(apply(t))`.
    pub fn normal_apply(&self, t: &DenseTensor) -> Result<DenseTensor> {
        match self {
            Self::Identity { .. } => {
                self.check_tensor(t)?;
                Ok(t.clone())
            }
            Self::GaussianDesign(_) => self.adjoint(&self.apply(t)?),
        }
    }

    fn check_tensor(&self, t: &DenseTensor) -> Result<()> {
        if t.shape() != self.shape() {
            return Err(invalid(format!(
                "tensor shape {:?} does not match operator shape {:?}",
                t.shape(),
                self.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawOp {
    Identity { shape: Vec<usize> },
    GaussianDesign { spec: GaussianDesignSpec, rescaled: bool },
}

impl Serialize for MeasurementOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = match self {
            Self::Identity { shape } => RawOp::Identity { shape: shape.clone() },
            Self::GaussianDesign(g) => RawOp::GaussianDesign {
                spec: g
                    .spec()
                    .ok_or_else(|| serde::ser::Error::custom("explicit designs are not serializable"))?,
                rescaled: g.rescaled,
            },
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementOp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let op = match RawOp::deserialize(d)? {
            RawOp::Identity { shape } => MeasurementOp::identity(&shape),
            RawOp::GaussianDesign { spec, rescaled } => {
                GaussianDesign::generate(&spec, rescaled).map(MeasurementOp::GaussianDesign)
            }
        };
        op.map_err(|e: Error| serde::de::Error::custom(e.to_string()))
    }
}
