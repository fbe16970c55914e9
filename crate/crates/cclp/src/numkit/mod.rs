//! Dense double-precision matrix kernel and the seeded RNG.
//!
//! Everything above this module (graphs, label propagation, losses,
//! autograd) is built from the handful of kernels defined here. All
//! reductions accumulate left-to-right so that results are reproducible
//! bit-for-bit across runs and platforms.

mod mat;
mod rng;

pub use mat::{hadamard, lu_solve, matmul, row_softmax, Mat};
pub use rng::Rng;

pub(crate) use mat::row_softmax_with;

/// Errors reported by the numeric kernels and the layers above them.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: non-finite value produced or supplied")]
    NonFinite { op: &'static str },
    #[error("linear system is singular to working precision (|pivot| = {pivot:.3e} < {threshold:.3e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("{op}: {detail}")]
    InvalidArg { op: &'static str, detail: String },
    #[error("class {class} has zero posterior mass in the batch")]
    ZeroClassMass { class: usize },
}

pub type Result<T> = std::result::Result<T, NumError>;

impl NumError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::ShapeMismatch { op, detail: detail.into() }
    }

    pub(crate) fn arg(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::InvalidArg { op, detail: detail.into() }
    }
}
