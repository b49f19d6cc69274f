//! Riemannian gradient descent and Gauss–Newton over Segre manifolds for CP
//! decomposition and scalar-on-tensor regression, with CP-ALS baselines and a
//! synthetic experiment harness.

// Config validation uses `!(x >= lo)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod als;
pub mod error;
pub mod harness;
pub mod init;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod segre;
pub mod solver;
pub mod stats;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};
pub use segre::{CPModel, SegrePoint};
pub use tensor::{DenseTensor, Matrix};
