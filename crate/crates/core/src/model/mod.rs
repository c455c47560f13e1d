//! The coupled flow model.
//!
//! A GRU summarises the context into `h_c`. Two MLPs read
//! `[x_t, ln(1+x_t), onehot(y_t), sin/cos(t), h_c]`: the vector field `v`
//! predicts `dx/dt` along the straight path from exponential noise to the
//! true inter-event time, and the classifier predicts logits for the clean
//! mark from a mark corrupted toward the base distribution `π₀`.

mod checkpoint;
mod train;

pub use checkpoint::Checkpoint;
pub use train::{train, EpochLoss, LrSchedule, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventError, EventSequence, ForecastWindow};
use crate::nn::{Activation, Embedding, Graph, GruCell, Mlp, ParamStore, Var};
use crate::rng::{self, FlowRng};

/// How the exponential base rate λ is chosen per window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BaseRate {
    /// Reciprocal of the mean context inter-event time.
    Context,
    Manual { rate: f64 },
}

/// How the base mark distribution `π₀` is chosen per window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseMarks {
    Uniform,
    /// Context mark frequencies with add-one smoothing.
    Context,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_marks: usize,
    pub horizon: usize,
    pub hidden_dim: usize,
    pub mark_embed_dim: usize,
    pub time_embed_dim: usize,
    /// Width of the sinusoidal flow-time features.
    pub flow_time_dim: usize,
    pub field_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub activation: Activation,
    /// Weight of the mark loss in the total objective.
    pub alpha: f64,
    pub base_rate: BaseRate,
    pub base_marks: BaseMarks,
    pub lambda_min: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_marks: 1,
            horizon: 20,
            hidden_dim: 64,
            mark_embed_dim: 16,
            time_embed_dim: 16,
            flow_time_dim: 16,
            field_hidden: vec![128, 128],
            classifier_hidden: vec![128, 128],
            activation: Activation::Tanh,
            alpha: 1.0,
            base_rate: BaseRate::Context,
            base_marks: BaseMarks::Uniform,
            lambda_min: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_marks", self.num_marks),
            ("horizon", self.horizon),
            ("hidden_dim", self.hidden_dim),
            ("mark_embed_dim", self.mark_embed_dim),
            ("time_embed_dim", self.time_embed_dim),
            ("flow_time_dim", self.flow_time_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self
            .field_hidden
            .iter()
            .chain(&self.classifier_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("hidden layer widths must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min.is_finite()) {
            return Err(Error::Config("lambda_min must be positive".into()));
        }
        if let BaseRate::Manual { rate } = self.base_rate {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!("manual base rate must be positive, got {rate}")));
            }
        }
        Ok(())
    }

    /// Input width of both flow networks.
    pub fn flow_input_dim(&self) -> usize {
        2 + self.num_marks + self.flow_time_dim + self.hidden_dim
    }
}

/// Encoded history `h_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(pub Vec<f64>);

/// One training draw for one target event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub x0: f64,
    pub x1: f64,
    pub t: f64,
    pub x_t: f64,
    pub y0: usize,
    pub y1: usize,
    pub y_t: usize,
}

/// Flow samples for a minibatch of windows; `window_of[i]` indexes the
/// context that sample `i` is conditioned on.
#[derive(Debug, Clone)]
pub struct FlowBatch<'a> {
    pub contexts: Vec<&'a EventSequence>,
    pub samples: Vec<FlowSample>,
    pub window_of: Vec<usize>,
}

impl FlowBatch<'_> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub time: f64,
    pub mark: f64,
}

/// Point on the straight path between `x0` (noise) and `x1` (data).
#[inline]
pub fn interpolate_time(x0: f64, x1: f64, t: f64) -> f64 {
    (1.0 - t) * x0 + t * x1
}

/// Keeps `y1` with probability `t`, otherwise returns the base draw `y0`.
/// With `y0 ~ π₀` the result is distributed as `(1−t)·π₀ + t·δ_{y1}`.
pub fn mix_marks(y0: usize, y1: usize, t: f64, rng: &mut FlowRng) -> usize {
    if rng::uniform(rng) < t {
        y1
    } else {
        y0
    }
}

/// Draws a mark from the mixture `(1−t)·π₀ + t·δ_{y1}`.
pub fn corrupt_mark(y1: usize, t: f64, base: &[f64], rng: &mut FlowRng) -> usize {
    let y0 = rng::categorical(rng, base);
    mix_marks(y0, y1, t, rng)
}

/// Base rate from the context: reciprocal mean gap, floored at `lambda_min`.
pub fn estimate_lambda(context: &EventSequence, lambda_min: f64) -> f64 {
    let n = context.len().max(1) as f64;
    let mean = context.inter_times().iter().sum::<f64>() / n;
    let rate = 1.0 / mean;
    if rate.is_finite() {
        rate.max(lambda_min)
    } else {
        lambda_min
    }
}

/// Base mark distribution for a window.
pub fn base_mark_probs(context: &EventSequence, mode: BaseMarks, num_marks: usize) -> Vec<f64> {
    match mode {
        BaseMarks::Uniform => vec![1.0 / num_marks as f64; num_marks],
        BaseMarks::Context => {
            let mut counts = vec![1.0; num_marks];
            for &m in context.marks() {
                counts[m] += 1.0;
            }
            let total = (context.len() + num_marks) as f64;
            counts.iter().map(|c| c / total).collect()
        }
    }
}

/// Fixed sin/cos features of the flow time at geometrically spaced
/// frequencies in `[1, 100]`.
pub fn flow_time_features(t: f64, dim: usize) -> Vec<f64> {
    let half = dim.div_ceil(2);
    (0..dim)
        .map(|i| {
            let k = i / 2;
            let freq = if half > 1 {
                100f64.powf(k as f64 / (half - 1) as f64)
            } else {
                1.0
            };
            if i % 2 == 0 {
                (freq * t).sin()
            } else {
                (freq * t).cos()
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FlowModel {
    config: ModelConfig,
    mark_embed: Embedding,
    time_embed: Mlp,
    encoder: GruCell,
    field: Mlp,
    classifier: Mlp,
}

impl FlowModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let act = config.activation;
        let mark_embed = Embedding::new("encoder.mark_embed", config.num_marks, config.mark_embed_dim);
        let time_embed = Mlp::new("encoder.time_embed", vec![1, config.time_embed_dim], act);
        let encoder = GruCell::new(
            "encoder.gru",
            config.mark_embed_dim + config.time_embed_dim,
            config.hidden_dim,
        );
        let input = config.flow_input_dim();
        let mut sizes = vec![input];
        sizes.extend(&config.field_hidden);
        sizes.push(1);
        let field = Mlp::new("field", sizes, act);
        let mut sizes = vec![input];
        sizes.extend(&config.classifier_hidden);
        sizes.push(config.num_marks);
        let classifier = Mlp::new("classifier", sizes, act);
        Ok(Self {
            config,
            mark_embed,
            time_embed,
            encoder,
            field,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_marks(&self) -> usize {
        self.config.num_marks
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = self.mark_embed.param_shapes();
        shapes.extend(self.time_embed.param_shapes());
        shapes.extend(self.encoder.param_shapes());
        shapes.extend(self.field.param_shapes());
        shapes.extend(self.classifier.param_shapes());
        shapes
    }

    /// Fresh parameters drawn from the init stream of `seed`.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = rng::stream(seed, rng::streams::PARAM_INIT);
        let mut store = ParamStore::new();
        self.mark_embed.init(&mut store, &mut rng);
        self.time_embed.init(&mut store, &mut rng);
        self.encoder.init(&mut store, &mut rng);
        self.field.init(&mut store, &mut rng);
        self.classifier.init(&mut store, &mut rng);
        store
    }

    /// λ for a window under the configured base-rate mode.
    pub fn base_rate(&self, context: &EventSequence) -> f64 {
        match self.config.base_rate {
            BaseRate::Context => estimate_lambda(context, self.config.lambda_min),
            BaseRate::Manual { rate } => rate,
        }
    }

    pub fn base_marks(&self, context: &EventSequence) -> Vec<f64> {
        base_mark_probs(context, self.config.base_marks, self.config.num_marks)
    }

    fn check_context(&self, ctx: &EventSequence) -> Result<()> {
        if ctx.is_empty() {
            return Err(EventError::EmptyContext.into());
        }
        if ctx.vocab_size() != self.config.num_marks {
            return Err(EventError::VocabMismatch {
                declared: ctx.vocab_size(),
                expected: self.config.num_marks,
            }
            .into());
        }
        Ok(())
    }

    /// Runs the recurrent encoder over a batch of contexts (of any lengths)
    /// and returns the `B × d` matrix of final hidden states.
    pub fn encode_contexts(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        contexts: &[&EventSequence],
    ) -> Result<Var> {
        for ctx in contexts {
            self.check_context(ctx)?;
        }
        let b = contexts.len();
        let d = self.config.hidden_dim;
        let steps = contexts.iter().map(|c| c.len()).max().unwrap_or(0);
        let mut h = g.input(b, d, vec![0.0; b * d])?;
        for s in 0..steps {
            let mask: Vec<bool> = contexts.iter().map(|c| s < c.len()).collect();
            let ids: Vec<usize> = contexts
                .iter()
                .map(|c| c.marks().get(s).copied().unwrap_or(0))
                .collect();
            let log_dt: Vec<f64> = contexts
                .iter()
                .map(|c| c.inter_times().get(s).map_or(0.0, |x| x.ln_1p()))
                .collect();
            let mark_e = self.mark_embed.lookup(g, store, &ids)?;
            let dt_in = g.input(b, 1, log_dt)?;
            let time_e = self.time_embed.forward(g, store, dt_in)?;
            let z = g.concat(&[mark_e, time_e])?;
            let all = mask.iter().all(|&m| m);
            h = self
                .encoder
                .step(g, store, z, h, if all { None } else { Some(&mask) })?;
        }
        Ok(h)
    }

    pub fn encode_context(&self, store: &ParamStore, context: &EventSequence) -> Result<ContextVector> {
        let mut g = Graph::new();
        let h = self.encode_contexts(&mut g, store, &[context])?;
        Ok(ContextVector(g.value(h).to_vec()))
    }

    /// Both heads for `N` rows. `h_rows` is `N × d`, one context row per
    /// sample. Returns `(v: N×1, logits: N×M)`.
    pub fn forward_rows(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h_rows: Var,
        x_t: &[f64],
        y_t: &[usize],
        t: &[f64],
    ) -> Result<(Var, Var)> {
        let n = x_t.len();
        let m = self.config.num_marks;
        let tf = self.config.flow_time_dim;
        if y_t.len() != n || t.len() != n || g.shape(h_rows) != (n, self.config.hidden_dim) {
            return Err(Error::Config(format!(
                "forward: {} times, {} marks, {} flow times, context rows {:?}",
                n,
                y_t.len(),
                t.len(),
                g.shape(h_rows)
            )));
        }
        let width = 2 + m + tf;
        let mut feats = Vec::with_capacity(n * width);
        for i in 0..n {
            if y_t[i] >= m {
                return Err(EventError::MarkOutOfRange {
                    index: i,
                    mark: y_t[i] as i64,
                    vocab_size: m,
                }
                .into());
            }
            feats.push(x_t[i]);
            feats.push(x_t[i].ln_1p());
            feats.extend((0..m).map(|k| if k == y_t[i] { 1.0 } else { 0.0 }));
            feats.extend(flow_time_features(t[i], tf));
        }
        let feats = g.input(n, width, feats)?;
        let input = g.concat(&[feats, h_rows])?;
        let v = self.field.forward(g, store, input)?;
        let logits = self.classifier.forward(g, store, input)?;
        Ok((v, logits))
    }

    /// `(v, logits)` for a single event state.
    pub fn forward(
        &self,
        store: &ParamStore,
        x_t: f64,
        y_t: usize,
        t: f64,
        h_c: &ContextVector,
    ) -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let h = g.input(1, h_c.0.len(), h_c.0.clone())?;
        let (v, logits) = self.forward_rows(&mut g, store, h, &[x_t], &[y_t], &[t])?;
        Ok((g.scalar(v), g.value(logits).to_vec()))
    }

    /// Independent `(t, x0, y0)` draws for every target event of every window.
    pub fn draw_batch<'a>(&self, windows: &[&'a ForecastWindow], rng: &mut FlowRng) -> FlowBatch<'a> {
        let mut batch = FlowBatch {
            contexts: Vec::with_capacity(windows.len()),
            samples: Vec::new(),
            window_of: Vec::new(),
        };
        for (w, window) in windows.iter().enumerate() {
            let ctx = window.context();
            let lambda = self.base_rate(ctx);
            let base = self.base_marks(ctx);
            batch.contexts.push(ctx);
            for (x1, y1) in window.target().iter() {
                let t = rng::uniform(rng);
                let x0 = rng::exponential(rng, lambda);
                let y0 = rng::categorical(rng, &base);
                let y_t = mix_marks(y0, y1, t, rng);
                batch.samples.push(FlowSample {
                    x0,
                    x1,
                    t,
                    x_t: interpolate_time(x0, x1, t),
                    y0,
                    y1,
                    y_t,
                });
                batch.window_of.push(w);
            }
        }
        batch
    }

    /// Builds the loss graph. Returns `(total, time, mark, logits)` nodes.
    pub fn build_loss(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &FlowBatch<'_>,
        alpha: f64,
    ) -> Result<(Var, Var, Var, Var)> {
        if batch.is_empty() {
            return Err(Error::Config("empty flow batch".into()));
        }
        let h = self.encode_contexts(g, store, &batch.contexts)?;
        let h_rows = g.gather_rows(h, &batch.window_of)?;
        let x_t: Vec<f64> = batch.samples.iter().map(|s| s.x_t).collect();
        let y_t: Vec<usize> = batch.samples.iter().map(|s| s.y_t).collect();
        let t: Vec<f64> = batch.samples.iter().map(|s| s.t).collect();
        let (v, logits) = self.forward_rows(g, store, h_rows, &x_t, &y_t, &t)?;
        let target: Vec<f64> = batch.samples.iter().map(|s| s.x1 - s.x0).collect();
        let labels: Vec<usize> = batch.samples.iter().map(|s| s.y1).collect();
        let time = g.mse(v, &target)?;
        let mark = g.cross_entropy(logits, &labels)?;
        let total = g.weighted_sum(&[(time, 1.0), (mark, alpha)])?;
        Ok((total, time, mark, logits))
    }

    /// Mean squared error between predicted and target velocities.
    pub fn loss_time(&self, store: &ParamStore, batch: &FlowBatch<'_>) -> Result<f64> {
        Ok(self.losses(store, batch, self.config.alpha)?.time)
    }

    /// Mean cross-entropy of the clean marks.
    pub fn loss_mark(&self, store: &ParamStore, batch: &FlowBatch<'_>) -> Result<f64> {
        Ok(self.losses(store, batch, self.config.alpha)?.mark)
    }

    pub fn loss_total(&self, store: &ParamStore, batch: &FlowBatch<'_>, alpha: f64) -> Result<f64> {
        Ok(self.losses(store, batch, alpha)?.total)
    }

    pub fn losses(&self, store: &ParamStore, batch: &FlowBatch<'_>, alpha: f64) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let (total, time, mark, _) = self.build_loss(&mut g, store, batch, alpha)?;
        Ok(LossBreakdown {
            total: g.scalar(total),
            time: g.scalar(time),
            mark: g.scalar(mark),
        })
    }

    /// Losses plus gradients accumulated into `store`.
    pub fn backprop(&self, store: &mut ParamStore, batch: &FlowBatch<'_>, alpha: f64) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let (total, time, mark, _) = self.build_loss(&mut g, store, batch, alpha)?;
        let grads = g.backward(total)?;
        grads.accumulate_into(store)?;
        Ok(LossBreakdown {
            total: g.scalar(total),
            time: g.scalar(time),
            mark: g.scalar(mark),
        })
    }

    /// Fraction of samples whose arg-max logit is the clean mark.
    pub fn mark_accuracy(&self, store: &ParamStore, batch: &FlowBatch<'_>) -> Result<f64> {
        let mut g = Graph::new();
        let (_, _, _, logits) = self.build_loss(&mut g, store, batch, self.config.alpha)?;
        let m = self.config.num_marks;
        let z = g.value(logits);
        let hits = batch
            .samples
            .iter()
            .enumerate()
            .filter(|(i, s)| argmax(&z[i * m..(i + 1) * m]) == s.y1)
            .count();
        Ok(hits as f64 / batch.len() as f64)
    }
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn small_config(m: usize) -> ModelConfig {
        ModelConfig {
            num_marks: m,
            horizon: 3,
            hidden_dim: 4,
            mark_embed_dim: 3,
            time_embed_dim: 2,
            flow_time_dim: 4,
            field_hidden: vec![6],
            classifier_hidden: vec![5],
            ..ModelConfig::default()
        }
    }

    fn seq(dts: &[f64], marks: &[usize], m: usize) -> EventSequence {
        EventSequence::new(dts.to_vec(), marks.to_vec(), m).unwrap()
    }

    #[test]
    fn path_endpoints_and_midpoint() {
        assert_eq!(interpolate_time(2.0, 4.0, 0.0), 2.0);
        assert_eq!(interpolate_time(2.0, 4.0, 1.0), 4.0);
        assert_eq!(interpolate_time(2.0, 4.0, 0.5), 3.0);
    }

    #[test]
    fn corrupt_mark_at_t_one_is_clean() {
        let mut rng = rng::stream(0, 0);
        for _ in 0..1000 {
            assert_eq!(corrupt_mark(2, 1.0, &[0.25; 4], &mut rng), 2);
        }
    }

    #[test]
    fn lambda_estimates() {
        assert_eq!(estimate_lambda(&seq(&[0.5, 1.5], &[0, 0], 1), 1e-6), 1.0);
        assert_eq!(estimate_lambda(&seq(&[2.0], &[0], 1), 1e-6), 0.5);
        assert_eq!(estimate_lambda(&seq(&[1e9], &[0], 1), 1e-6), 1e-6);
    }

    #[test]
    fn context_base_marks_are_smoothed() {
        let p = base_mark_probs(&seq(&[1.0, 1.0], &[0, 0], 3), BaseMarks::Context, 3);
        assert_eq!(p, vec![0.6, 0.2, 0.2]);
        let p = base_mark_probs(&seq(&[1.0], &[0], 4), BaseMarks::Uniform, 4);
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = -1.0;
        assert!(c.validate().is_err());
        let c = ModelConfig {
            hidden_dim: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let c: ModelConfig =
            serde_json::from_str(r#"{"num_marks":3,"base_rate":{"mode":"manual","rate":2.0}}"#)
                .unwrap();
        assert_eq!(c.base_rate, BaseRate::Manual { rate: 2.0 });
        assert_eq!(c.hidden_dim, 64);
    }

    #[test]
    fn zero_model_encodes_to_zero() {
        let model = FlowModel::new(small_config(3)).unwrap();
        let mut store = ParamStore::new();
        for (name, shape) in model.param_shapes() {
            store.insert(name, Tensor::zeros(shape));
        }
        let h = model
            .encode_context(&store, &seq(&[0.3, 2.0, 1.0], &[2, 0, 1], 3))
            .unwrap();
        assert_eq!(h.0, vec![0.0; 4]);
    }

    #[test]
    fn encoder_is_order_sensitive() {
        let model = FlowModel::new(small_config(3)).unwrap();
        let store = model.init_params(5);
        let a = model.encode_context(&store, &seq(&[0.3, 2.0], &[2, 0], 3)).unwrap();
        let b = model.encode_context(&store, &seq(&[2.0, 0.3], &[0, 2], 3)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn encoder_rejects_foreign_vocab_and_empty_context() {
        let model = FlowModel::new(small_config(3)).unwrap();
        let store = model.init_params(5);
        assert!(model.encode_context(&store, &seq(&[1.0], &[0], 5)).is_err());
        assert!(model
            .encode_context(&store, &EventSequence::empty(3).unwrap())
            .is_err());
    }

    #[test]
    fn batched_encoding_matches_single() {
        let model = FlowModel::new(small_config(2)).unwrap();
        let store = model.init_params(1);
        let a = seq(&[0.3, 2.0, 0.1], &[1, 0, 1], 2);
        let b = seq(&[1.5], &[0], 2);
        let mut g = Graph::new();
        let h = model.encode_contexts(&mut g, &store, &[&a, &b]).unwrap();
        let ha = model.encode_context(&store, &a).unwrap();
        let hb = model.encode_context(&store, &b).unwrap();
        assert_eq!(&g.value(h)[..4], ha.0.as_slice());
        assert_eq!(&g.value(h)[4..], hb.0.as_slice());
    }

    #[test]
    fn forward_shape_and_determinism() {
        let model = FlowModel::new(small_config(5)).unwrap();
        let store = model.init_params(2);
        let h = ContextVector(vec![0.1, -0.2, 0.3, 0.0]);
        let a = model.forward(&store, 0.7, 3, 0.25, &h).unwrap();
        let b = model.forward(&store, 0.7, 3, 0.25, &h).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 5);
        assert!(model.forward(&store, 0.7, 5, 0.25, &h).is_err());
    }

    #[test]
    fn alpha_zero_is_time_loss() {
        let model = FlowModel::new(small_config(2)).unwrap();
        let store = model.init_params(3);
        let w = ForecastWindow::new(
            seq(&[1.0, 0.5], &[0, 1], 2),
            seq(&[0.2, 0.9, 1.4], &[1, 1, 0], 2),
            3,
        )
        .unwrap();
        let batch = model.draw_batch(&[&w], &mut rng::stream(0, 9));
        let l = model.losses(&store, &batch, 0.0).unwrap();
        assert_eq!(l.total, l.time);
        let l1 = model.losses(&store, &batch, 1.0).unwrap();
        assert!((l1.total - (l1.time + l1.mark)).abs() < 1e-15);
    }

    #[test]
    fn flow_time_feature_width() {
        assert_eq!(flow_time_features(0.3, 16).len(), 16);
        assert_eq!(flow_time_features(0.3, 3).len(), 3);
        assert_eq!(flow_time_features(0.0, 2), vec![0.0, 1.0]);
    }
}
