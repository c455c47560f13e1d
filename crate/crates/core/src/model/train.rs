use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{FlowModel, LossBreakdown};
use crate::error::{Error, Result};
use crate::events::ForecastWindow;
use crate::nn::{adam_step, AdamConfig, ParamStore};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per minibatch.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    /// Global gradient-norm ceiling, off when `None`.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            schedule: LrSchedule::Constant,
            grad_clip: None,
            seed: 0,
        }
    }
}

/// Learning rate over the course of training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `adam.lr` throughout.
    #[default]
    Constant,
    /// Half-cosine from `adam.lr` down to 0 at the last step.
    Cosine,
}

impl LrSchedule {
    /// Rate for optimizer step `step` (0-based) out of `total`.
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine if total > 0 => {
                let frac = step as f64 / total as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
            LrSchedule::Cosine => base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_time: f64,
    pub loss_mark: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<EpochLoss>,
}

impl TrainReport {
    /// Loss trace as CSV with header `epoch,loss_total,loss_time,loss_mark`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_total,loss_time,loss_mark\n");
        for e in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.loss_total, e.loss_time, e.loss_mark
            ));
        }
        out
    }
}

fn numerical_abort(store: &ParamStore, epoch: usize, batch: usize, err: Error) -> Error {
    let norms: Vec<String> = store
        .param_norms()
        .into_iter()
        .map(|(k, v)| format!("{k}={v:.4e}"))
        .collect();
    Error::Numerical(format!(
        "epoch {epoch}, batch {batch}: {err}; parameter norms: {}",
        norms.join(", ")
    ))
}

/// Minibatch Adam on the joint objective.
///
/// Each epoch visits the windows in a fresh seeded order; every target event
/// gets its own flow time, exponential noise and corrupted mark. Training is
/// single-threaded and bit-for-bit reproducible for a given seed.
pub fn train(
    model: &FlowModel,
    store: &mut ParamStore,
    windows: &[ForecastWindow],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if windows.is_empty() && cfg.epochs > 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let horizon = model.config().horizon;
    if let Some(w) = windows.iter().find(|w| w.horizon() != horizon) {
        return Err(Error::Config(format!(
            "window horizon {} differs from model horizon {horizon}",
            w.horizon()
        )));
    }

    let mut noise_rng = rng::stream(cfg.seed, streams::TRAIN);
    let mut order_rng = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut report = TrainReport::default();
    let alpha = model.config().alpha;
    let total_steps = cfg.epochs * windows.len().div_ceil(cfg.batch_size);
    let mut adam = cfg.adam;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        // Fisher-Yates with the crate's own draws so the order is fixed by seed
        for i in (1..order.len()).rev() {
            let j = (rng::uniform(&mut order_rng) * (i + 1) as f64) as usize;
            order.swap(i, j.min(i));
        }
        let mut sums = LossBreakdown {
            total: 0.0,
            time: 0.0,
            mark: 0.0,
        };
        let mut count = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_windows: Vec<&ForecastWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let batch = model.draw_batch(&batch_windows, &mut noise_rng);
            store.zero_grads();
            let loss = model
                .backprop(store, &batch, alpha)
                .map_err(|e| numerical_abort(store, epoch, b, e))?;
            if !loss.total.is_finite() {
                return Err(numerical_abort(
                    store,
                    epoch,
                    b,
                    Error::Numerical("non-finite loss".into()),
                ));
            }
            if let Some(max) = cfg.grad_clip {
                store.clip_grad_norm(max);
            }
            adam.lr = cfg.schedule.rate(cfg.adam.lr, step, total_steps);
            adam_step(store, &adam)?;
            step += 1;
            let n = batch.len();
            sums.total += loss.total * n as f64;
            sums.time += loss.time * n as f64;
            sums.mark += loss.mark * n as f64;
            count += n;
            debug!("epoch {epoch} batch {b}: loss {:.6}", loss.total);
        }
        let n = count.max(1) as f64;
        let entry = EpochLoss {
            epoch,
            loss_total: sums.total / n,
            loss_time: sums.time / n,
            loss_mark: sums.mark / n,
        };
        info!(
            "epoch {epoch}: total {:.5} time {:.5} mark {:.5}",
            entry.loss_total, entry.loss_time, entry.loss_mark
        );
        report.trace.push(entry);
    }
    Ok(report)
}
