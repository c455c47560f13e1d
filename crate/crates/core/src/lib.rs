//! Non-autoregressive forecasting of marked event sequences with coupled
//! flow matching.
//!
//! Inter-event times follow a continuous flow from an exponential base
//! distribution, marks follow a discrete mixture path from a categorical base
//! distribution, and both are conditioned on a recurrent encoding of the
//! observed history. The crate is organised bottom-up:
//!
//! * [`events`]: sequences, context/horizon windows, JSONL datasets.
//! * [`synthgen`]: Poisson and Hawkes simulators used as ground truth.
//! * [`nn`]: tensors, a reverse-mode tape, dense/GRU layers and Adam.
//! * [`model`]: context encoder, flow paths, losses and training.
//! * [`sampler`]: midpoint/simplex joint generation.
//! * [`metrics`]: OTD, RMSE and sMAPE, histogram summaries.

// `!(x >= y)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod synthgen;

pub use error::{Error, Result};
pub use events::{EventSequence, ForecastWindow};
pub use model::{FlowModel, ModelConfig};
pub use nn::ParamStore;
pub use sampler::SamplerConfig;

/// Version tag written into every artifact this crate produces.
pub const FORMAT_VERSION: u32 = 1;
