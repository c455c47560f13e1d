//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), a
//! counter-based generator whose output is identical on every platform. A
//! `(seed, stream)` pair names an independent sequence, so per-sequence and
//! per-window draws do not depend on iteration or thread order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type FlowRng = ChaCha8Rng;

/// Stream ids reserved for the training pipeline.
pub mod streams {
    pub const PARAM_INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    /// Dataset simulation streams are `SIMULATE_BASE + split`.
    pub const SIMULATE_BASE: u64 = 1 << 16;
    /// Sampling streams are `SAMPLER_BASE + window index`.
    pub const SAMPLER_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, stream: u64) -> FlowRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut FlowRng) -> f64 {
    rng.random::<f64>()
}

/// Exponential(rate) by inversion. Never returns 0.
pub fn exponential(rng: &mut FlowRng, rate: f64) -> f64 {
    loop {
        let w = -(1.0 - uniform(rng)).ln() / rate;
        if w > 0.0 {
            return w;
        }
    }
}

/// Inverse-CDF categorical draw. `weights` need not be normalised but must be
/// non-negative with a positive sum.
pub fn categorical(rng: &mut FlowRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = uniform(rng) * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if target < acc {
            return k;
        }
    }
    // rounding left `target` at or past the final partial sum
    last_positive
}
