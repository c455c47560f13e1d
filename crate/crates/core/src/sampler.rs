//! Joint generation of `L` future events from noise.
//!
//! Each of `S` steps evaluates the model once at `(x, y, t)`, advances the
//! times with a midpoint step (re-evaluating the field at the half step) and
//! moves the marks along the simplex velocity built from the first
//! evaluation's logits.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventError, EventSequence};
use crate::model::{base_mark_probs, estimate_lambda, BaseMarks, BaseRate, ContextVector, FlowModel};
use crate::nn::{Graph, NnError, ParamStore};
use crate::rng::{self, streams, FlowRng};

/// Flow time beyond which the simplex velocity is not formed.
const T_GUARD: f64 = 1.0 - 1e-9;
/// Tolerance on `|Σp − 1|` counted as a simplex violation.
const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    pub eps_time: f64,
    pub eps_prob: f64,
    /// Overrides the model's base-rate mode when set.
    pub base_rate: Option<BaseRate>,
    /// Overrides the model's base-mark mode when set.
    pub base_marks: Option<BaseMarks>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 8,
            eps_time: 1e-6,
            eps_prob: 1e-5,
            base_rate: None,
            base_marks: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("sampler steps must be at least 1".into()));
        }
        if !(self.eps_time > 0.0 && self.eps_time.is_finite()) {
            return Err(Error::Config(format!("eps_time must be positive, got {}", self.eps_time)));
        }
        if !(self.eps_prob > 0.0 && self.eps_prob.is_finite()) {
            return Err(Error::Config(format!("eps_prob must be positive, got {}", self.eps_prob)));
        }
        if let Some(BaseRate::Manual { rate }) = self.base_rate {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!("manual base rate must be positive, got {rate}")));
            }
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.steps as f64
    }
}

/// Velocities for `n` events and their `n × M` row-major mark logits.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub velocity: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Anything that maps a joint state `(x, y, t)` to time velocities and mark
/// logits. The trained model conditioned on one context is the main
/// implementor; tests plug in closed-form stubs.
pub trait VectorField {
    fn num_marks(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[usize], t: f64) -> Result<FieldOutput>;
}

/// The model with context encodings fixed per row: row `i` of every
/// evaluation is conditioned on row `i` of `h_rows`.
pub struct ConditionedField<'a> {
    model: &'a FlowModel,
    store: &'a ParamStore,
    h_rows: Vec<f64>,
    rows: usize,
}

impl<'a> ConditionedField<'a> {
    pub fn new(model: &'a FlowModel, store: &'a ParamStore, h_c: &ContextVector, rows: usize) -> Self {
        let h_rows = (0..rows).flat_map(|_| h_c.0.iter().copied()).collect();
        Self {
            model,
            store,
            h_rows,
            rows,
        }
    }

    /// `h_rows` is `rows × hidden_dim`, row-major.
    pub fn from_rows(model: &'a FlowModel, store: &'a ParamStore, h_rows: Vec<f64>, rows: usize) -> Self {
        Self {
            model,
            store,
            h_rows,
            rows,
        }
    }
}

impl VectorField for ConditionedField<'_> {
    fn num_marks(&self) -> usize {
        self.model.num_marks()
    }

    fn eval(&self, x: &[f64], y: &[usize], t: f64) -> Result<FieldOutput> {
        let n = x.len();
        if n != self.rows {
            return Err(Error::Config(format!(
                "field conditioned on {} rows evaluated on {n}",
                self.rows
            )));
        }
        let d = self.model.config().hidden_dim;
        let mut g = Graph::new();
        let h = g.input(n, d, self.h_rows.clone())?;
        let (v, logits) = self
            .model
            .forward_rows(&mut g, self.store, h, x, y, &vec![t; n])?;
        Ok(FieldOutput {
            velocity: g.value(v).to_vec(),
            logits: g.value(logits).to_vec(),
        })
    }
}

/// Invariant counters gathered while sampling. All violation counts are
/// expected to stay at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub windows: usize,
    pub positivity_violations: usize,
    pub simplex_violations: usize,
    pub mark_range_violations: usize,
    pub max_simplex_error: f64,
    pub max_final_t_error: f64,
    pub min_time: f64,
}

impl SamplerDiagnostics {
    fn fresh() -> Self {
        Self {
            min_time: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn merge(&mut self, other: &SamplerDiagnostics) {
        self.windows += other.windows;
        self.positivity_violations += other.positivity_violations;
        self.simplex_violations += other.simplex_violations;
        self.mark_range_violations += other.mark_range_violations;
        self.max_simplex_error = self.max_simplex_error.max(other.max_simplex_error);
        self.max_final_t_error = self.max_final_t_error.max(other.max_final_t_error);
        self.min_time = self.min_time.min(other.min_time);
    }

    pub fn is_clean(&self) -> bool {
        self.positivity_violations == 0
            && self.simplex_violations == 0
            && self.mark_range_violations == 0
            && self.max_final_t_error <= 1e-12
    }

    fn check_times(&mut self, x: &[f64], eps_time: f64) {
        for &v in x {
            debug_assert!(v >= eps_time, "time {v} below floor {eps_time}");
            if !(v >= eps_time) {
                self.positivity_violations += 1;
            }
            self.min_time = self.min_time.min(v);
        }
    }

    fn check_simplex(&mut self, p: &[f64]) {
        let err = (p.iter().sum::<f64>() - 1.0).abs();
        self.max_simplex_error = self.max_simplex_error.max(err);
        if !(err < SIMPLEX_TOL) || p.iter().any(|&q| !(q >= 0.0)) {
            self.simplex_violations += 1;
        }
    }
}

/// Initial state: `x ~ Exp(λ)` and `y ~ π₀`, i.i.d. over `L` slots.
pub fn init_noise(lambda: f64, base: &[f64], horizon: usize, rng: &mut FlowRng) -> (Vec<f64>, Vec<usize>) {
    let x = (0..horizon).map(|_| rng::exponential(rng, lambda)).collect();
    let y = (0..horizon).map(|_| rng::categorical(rng, base)).collect();
    (x, y)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_finite(values: &[f64], what: &str, t: f64) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite {what} at flow time {t:.6} (event {i})"
        )));
    }
    Ok(())
}

fn eval_at(field: &dyn VectorField, x: &[f64], y: &[usize], t: f64) -> Result<FieldOutput> {
    let out = field.eval(x, y, t).map_err(|e| match e {
        Error::Nn(inner @ NnError::NonFinite { .. }) => {
            Error::Numerical(format!("flow time {t:.6}: {inner}"))
        }
        other => other,
    })?;
    check_finite(&out.velocity, "velocity", t)?;
    check_finite(&out.logits, "mark logits", t)?;
    Ok(out)
}

/// Midpoint update given the velocity `v0` already evaluated at `(x, y, t)`.
pub fn midpoint_from(
    field: &dyn VectorField,
    x: &[f64],
    y: &[usize],
    t: f64,
    h: f64,
    eps_time: f64,
    v0: &[f64],
) -> Result<Vec<f64>> {
    let x_mid: Vec<f64> = x
        .iter()
        .zip(v0)
        .map(|(&xi, &vi)| (xi + 0.5 * h * vi).max(eps_time))
        .collect();
    let v_mid = eval_at(field, &x_mid, y, t + 0.5 * h)?.velocity;
    Ok(x.iter()
        .zip(&v_mid)
        .map(|(&xi, &vi)| (xi + h * vi).max(eps_time))
        .collect())
}

/// One midpoint step for the inter-event times with the positivity floor.
pub fn step_time(
    field: &dyn VectorField,
    x: &[f64],
    y: &[usize],
    t: f64,
    h: f64,
    eps_time: f64,
) -> Result<Vec<f64>> {
    let v0 = eval_at(field, x, y, t)?.velocity;
    midpoint_from(field, x, y, t, h, eps_time, &v0)
}

/// `onehot(y) + h·(p − onehot(y))/(1 − t)`, before clamping.
pub fn simplex_update(p: &[f64], y: usize, t: f64, h: f64) -> Vec<f64> {
    let coef = h / (1.0 - t);
    p.iter()
        .enumerate()
        .map(|(k, &pk)| {
            let one = if k == y { 1.0 } else { 0.0 };
            one + coef * (pk - one)
        })
        .collect()
}

/// Floors every entry at `eps` and rescales to unit sum.
pub fn clamp_renormalize(p: &[f64], eps: f64) -> Vec<f64> {
    let clamped: Vec<f64> = p.iter().map(|&q| q.max(eps)).collect();
    let s: f64 = clamped.iter().sum();
    clamped.into_iter().map(|q| q / s).collect()
}

/// Next-mark distribution for one event from its predicted clean-mark
/// probabilities `p_t`. At the end of the flow `p_t` is used as is.
pub fn mark_distribution(p_t: &[f64], y: usize, t: f64, h: f64, eps_prob: f64) -> Vec<f64> {
    if t >= T_GUARD {
        return p_t.to_vec();
    }
    clamp_renormalize(&simplex_update(p_t, y, t, h), eps_prob)
}

/// Draws the next mark for every event from the logits at `(x, y, t)`.
pub fn step_mark(
    logits: &[f64],
    y: &[usize],
    t: f64,
    h: f64,
    eps_prob: f64,
    rng: &mut FlowRng,
) -> Vec<usize> {
    let m = logits.len() / y.len().max(1);
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            let p = mark_distribution(&softmax(&logits[i * m..(i + 1) * m]), yi, t, h, eps_prob);
            rng::categorical(rng, &p)
        })
        .collect()
}

/// Integrates the joint flow from `(x, y)` at `t = 0` to `t = 1`.
///
/// The state may stack several windows: event `i` belongs to window
/// `i / group` and draws its marks from `rngs[i / group]`, so each window
/// consumes its own stream in event order whatever else shares the batch.
pub fn run_flow(
    field: &dyn VectorField,
    mut x: Vec<f64>,
    mut y: Vec<usize>,
    group: usize,
    cfg: &SamplerConfig,
    rngs: &mut [FlowRng],
    diag: &mut SamplerDiagnostics,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let m = field.num_marks();
    let h = cfg.step_size();
    let group = group.max(1);
    if x.len() != y.len() || x.len().div_ceil(group) > rngs.len() {
        return Err(Error::Config(format!(
            "{} times, {} marks, {} streams for groups of {group}",
            x.len(),
            y.len(),
            rngs.len()
        )));
    }
    let mut t_acc = 0.0;
    for s in 0..cfg.steps {
        let t = s as f64 / cfg.steps as f64;
        let out = eval_at(field, &x, &y, t)?;
        let x_next = midpoint_from(field, &x, &y, t, h, cfg.eps_time, &out.velocity)?;
        let mut y_next = Vec::with_capacity(y.len());
        for (i, &yi) in y.iter().enumerate() {
            let p_t = softmax(&out.logits[i * m..(i + 1) * m]);
            let p = mark_distribution(&p_t, yi, t, h, cfg.eps_prob);
            diag.check_simplex(&p);
            y_next.push(rng::categorical(&mut rngs[i / group], &p));
        }
        x = x_next;
        y = y_next;
        diag.check_times(&x, cfg.eps_time);
        diag.mark_range_violations += y.iter().filter(|&&k| k >= m).count();
        t_acc += h;
    }
    diag.max_final_t_error = diag.max_final_t_error.max((t_acc - 1.0).abs());
    Ok((x, y))
}

#[derive(Debug, Clone)]
pub struct Generation {
    /// One forecast of `L` events per input context, in input order.
    pub sequences: Vec<EventSequence>,
    pub diagnostics: SamplerDiagnostics,
}

/// Windows evaluated together in one graph.
pub const CHUNK: usize = 64;

/// Generates a forecast of the model's horizon for every context. Chunks of
/// windows run in parallel and every window draws from its own RNG stream,
/// so the result does not depend on the thread count.
pub fn generate(
    model: &FlowModel,
    store: &ParamStore,
    contexts: &[&EventSequence],
    cfg: &SamplerConfig,
) -> Result<Generation> {
    cfg.validate()?;
    let m = model.num_marks();
    if let Some(c) = contexts.iter().find(|c| c.vocab_size() != m) {
        return Err(EventError::VocabMismatch {
            declared: c.vocab_size(),
            expected: m,
        }
        .into());
    }
    let chunks: Vec<Result<(Vec<EventSequence>, SamplerDiagnostics)>> = contexts
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| generate_chunk(model, store, chunk, c * CHUNK, cfg))
        .collect();

    let mut diagnostics = SamplerDiagnostics::fresh();
    let mut sequences = Vec::with_capacity(contexts.len());
    for r in chunks {
        let (seqs, d) = r?;
        diagnostics.merge(&d);
        sequences.extend(seqs);
    }
    debug!("sampled {} windows: {:?}", sequences.len(), diagnostics);
    Ok(Generation {
        sequences,
        diagnostics,
    })
}

fn generate_chunk(
    model: &FlowModel,
    store: &ParamStore,
    contexts: &[&EventSequence],
    first: usize,
    cfg: &SamplerConfig,
) -> Result<(Vec<EventSequence>, SamplerDiagnostics)> {
    let m = model.num_marks();
    let horizon = model.config().horizon;
    let d = model.config().hidden_dim;
    let mut g = Graph::new();
    let h = model.encode_contexts(&mut g, store, contexts)?;
    let h = g.value(h);

    let mut rngs = Vec::with_capacity(contexts.len());
    let mut x0 = Vec::with_capacity(contexts.len() * horizon);
    let mut y0 = Vec::with_capacity(contexts.len() * horizon);
    let mut h_rows = Vec::with_capacity(contexts.len() * horizon * d);
    for (k, ctx) in contexts.iter().enumerate() {
        let mut rng = rng::stream(cfg.seed, streams::SAMPLER_BASE + (first + k) as u64);
        let lambda = match cfg.base_rate {
            Some(BaseRate::Manual { rate }) => rate,
            Some(BaseRate::Context) => estimate_lambda(ctx, model.config().lambda_min),
            None => model.base_rate(ctx),
        };
        let base = match cfg.base_marks {
            Some(mode) => base_mark_probs(ctx, mode, m),
            None => model.base_marks(ctx),
        };
        let (x, y) = init_noise(lambda, &base, horizon, &mut rng);
        x0.extend(x);
        y0.extend(y);
        for _ in 0..horizon {
            h_rows.extend_from_slice(&h[k * d..(k + 1) * d]);
        }
        rngs.push(rng);
    }
    let field = ConditionedField::from_rows(model, store, h_rows, contexts.len() * horizon);
    let mut diag = SamplerDiagnostics::fresh();
    diag.windows = contexts.len();
    let (x, y) = run_flow(&field, x0, y0, horizon, cfg, &mut rngs, &mut diag)
        .map_err(|e| annotate(e, first))?;
    let seqs = x
        .chunks(horizon.max(1))
        .zip(y.chunks(horizon.max(1)))
        .map(|(xs, ys)| EventSequence::new(xs.to_vec(), ys.to_vec(), m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((seqs, diag))
}

fn annotate(e: Error, window: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("chunk starting at window {window}: {msg}")),
        other => other,
    }
}
