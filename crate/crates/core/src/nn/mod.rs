//! Small differentiable-function core in `f64`.
//!
//! Computation is recorded on a [`Graph`] (an explicit tape of matrix-level
//! operations) and differentiated in reverse. Parameters live in a
//! [`ParamStore`] keyed by path; a graph reads them in, and
//! [`Gradients::accumulate_into`] writes their gradients back for
//! [`adam_step`].

mod adam;
pub mod gradcheck;
mod graph;
mod layers;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, Embedding, GruCell, Mlp};
pub use tensor::{ParamStore, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: String, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("index {index} out of range for {op} with {rows} rows")]
    Index { op: String, index: usize, rows: usize },
}

impl NnError {
    pub(crate) fn shape(op: impl Into<String>, detail: impl Into<String>) -> Self {
        NnError::Shape {
            op: op.into(),
            detail: detail.into(),
        }
    }

    /// Prefixes the failing op with the layer that issued it.
    pub(crate) fn in_layer(self, layer: &str) -> Self {
        match self {
            NnError::Shape { op, detail } => NnError::Shape {
                op: format!("{layer}/{op}"),
                detail,
            },
            NnError::NonFinite { op } => NnError::NonFinite {
                op: format!("{layer}/{op}"),
            },
            other => other,
        }
    }
}
