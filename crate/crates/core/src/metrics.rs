//! Forecast metrics: OTD, RMSE over inter-event times, RMSE over mark
//! counts, sMAPE, and histogram summaries of generated versus true data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventSequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("prediction has {pred} events, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("prediction vocabulary {pred} differs from truth vocabulary {truth}")]
    VocabMismatch { pred: usize, truth: usize },
    #[error("{pred} predicted windows but {truth} truth windows")]
    WindowCountMismatch { pred: usize, truth: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("deletion cost must be positive and finite, got {0}")]
    InvalidDeleteCost(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtdConfig {
    /// Cost of leaving one event unmatched, in time units.
    pub delete_cost: f64,
}

impl Default for OtdConfig {
    fn default() -> Self {
        Self { delete_cost: 1.0 }
    }
}

impl OtdConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.delete_cost > 0.0 && self.delete_cost.is_finite() {
            Ok(())
        } else {
            Err(MetricError::InvalidDeleteCost(self.delete_cost))
        }
    }
}

/// How predicted and true marks are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkError {
    /// Per-type event counts over the horizon.
    #[default]
    Counts,
    /// Label indices position by position.
    Positional,
}

fn same_vocab(pred: &EventSequence, truth: &EventSequence) -> Result<(), MetricError> {
    if pred.vocab_size() != truth.vocab_size() {
        return Err(MetricError::VocabMismatch {
            pred: pred.vocab_size(),
            truth: truth.vocab_size(),
        });
    }
    Ok(())
}

fn same_length(pred: &EventSequence, truth: &EventSequence) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Minimum cost of aligning the two streams, where only same-mark events
/// may be paired (cost `|a_i − b_j|` on arrival times measured from the
/// window start) and every unpaired event costs `delete_cost`.
pub fn otd(pred: &EventSequence, truth: &EventSequence, cfg: &OtdConfig) -> Result<f64, MetricError> {
    same_vocab(pred, truth)?;
    cfg.validate()?;
    let a = pred.arrival_times();
    let b = truth.arrival_times();
    let (ya, yb) = (pred.marks(), truth.marks());
    let c = cfg.delete_cost;
    let m = b.len();
    let mut prev: Vec<f64> = (0..=m).map(|j| j as f64 * c).collect();
    let mut cur = vec![0.0; m + 1];
    for i in 1..=a.len() {
        cur[0] = i as f64 * c;
        for j in 1..=m {
            let mut best = (prev[j] + c).min(cur[j - 1] + c);
            if ya[i - 1] == yb[j - 1] {
                best = best.min(prev[j - 1] + (a[i - 1] - b[j - 1]).abs());
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

pub fn rmse_x(pred: &EventSequence, truth: &EventSequence) -> Result<f64, MetricError> {
    same_length(pred, truth)?;
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = pred
        .inter_times()
        .iter()
        .zip(truth.inter_times())
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn rmse_y(pred: &EventSequence, truth: &EventSequence, mode: MarkError) -> Result<f64, MetricError> {
    same_vocab(pred, truth)?;
    match mode {
        MarkError::Counts => {
            let m = pred.vocab_size();
            let mut diff = vec![0i64; m];
            for &k in pred.marks() {
                diff[k] += 1;
            }
            for &k in truth.marks() {
                diff[k] -= 1;
            }
            let sse: f64 = diff.iter().map(|&d| (d * d) as f64).sum();
            Ok((sse / m as f64).sqrt())
        }
        MarkError::Positional => {
            same_length(pred, truth)?;
            if pred.is_empty() {
                return Err(MetricError::Empty);
            }
            let sse: f64 = pred
                .marks()
                .iter()
                .zip(truth.marks())
                .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
                .sum();
            Ok((sse / pred.len() as f64).sqrt())
        }
    }
}

/// Symmetric mean absolute percentage error of the inter-event times, in
/// `[0, 200]`.
pub fn smape(pred: &EventSequence, truth: &EventSequence) -> Result<f64, MetricError> {
    same_length(pred, truth)?;
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let total: f64 = pred
        .inter_times()
        .iter()
        .zip(truth.inter_times())
        .map(|(&p, &t)| {
            let denom = p.abs() + t.abs();
            if denom == 0.0 {
                0.0
            } else {
                2.0 * (p - t).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * total / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation, 0 for a single value.
    pub sd: f64,
}

impl Summary {
    /// Order-independent: values are sorted before summation.
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        if v.len() < 2 {
            return Summary { mean, sd: 0.0 };
        }
        let mut dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        dev.sort_by(f64::total_cmp);
        Summary {
            mean,
            sd: (dev.iter().sum::<f64>() / (n - 1.0)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub otd: f64,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub smape: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub otd: OtdConfig,
    pub mark_error: MarkError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub num_windows: usize,
    pub otd: Summary,
    pub rmse_x: Summary,
    pub rmse_y: Summary,
    pub smape: Summary,
    pub windows: Vec<WindowMetrics>,
}

pub fn window_metrics(
    pred: &EventSequence,
    truth: &EventSequence,
    cfg: &EvalConfig,
) -> Result<WindowMetrics, MetricError> {
    Ok(WindowMetrics {
        otd: otd(pred, truth, &cfg.otd)?,
        rmse_x: rmse_x(pred, truth)?,
        rmse_y: rmse_y(pred, truth, cfg.mark_error)?,
        smape: smape(pred, truth)?,
    })
}

/// All four metrics per window plus mean ± s.d. across windows.
pub fn evaluate(
    preds: &[EventSequence],
    truths: &[EventSequence],
    cfg: &EvalConfig,
) -> Result<MetricReport, MetricError> {
    if preds.len() != truths.len() {
        return Err(MetricError::WindowCountMismatch {
            pred: preds.len(),
            truth: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let windows = preds
        .par_iter()
        .zip(truths)
        .map(|(p, t)| window_metrics(p, t, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let col = |f: fn(&WindowMetrics) -> f64| Summary::of(&windows.iter().map(f).collect::<Vec<_>>());
    Ok(MetricReport {
        num_windows: windows.len(),
        otd: col(|w| w.otd),
        rmse_x: col(|w| w.rmse_x),
        rmse_y: col(|w| w.rmse_y),
        smape: col(|w| w.smape),
        windows,
    })
}

/// Linear-interpolation quantile, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Uniform bins on `[0, upper]` plus one overflow bin for values above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub upper: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(upper: f64, bins: usize) -> Self {
        Self {
            upper,
            counts: vec![0; bins.max(1)],
            overflow: 0,
        }
    }

    /// Bins `[lo, hi)`, the last one closed on the right.
    pub fn add(&mut self, value: f64) {
        let bins = self.counts.len();
        if value > self.upper || !(self.upper > 0.0) {
            self.overflow += 1;
            return;
        }
        let idx = ((value.max(0.0) / self.upper) * bins as f64) as usize;
        self.counts[idx.min(bins - 1)] += 1;
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.add(v);
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// Relative frequencies of every bin, overflow last.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts
            .iter()
            .chain(std::iter::once(&self.overflow))
            .map(|&c| c as f64 / n)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let bins = self.counts.len();
        let width = self.upper / bins as f64;
        let freqs = self.frequencies();
        let mut out = String::from("bin_lo,bin_hi,count,frequency\n");
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i as f64 * width,
                (i + 1) as f64 * width,
                c,
                freqs[i]
            ));
        }
        out.push_str(&format!("{},inf,{},{}\n", self.upper, self.overflow, freqs[bins]));
        out
    }
}

pub const HIST_BINS: usize = 50;
pub const HIST_QUANTILE: f64 = 0.99;

/// Total-variation distance between two histograms on the same bins.
pub fn total_variation(a: &Histogram, b: &Histogram) -> f64 {
    let (fa, fb) = (a.frequencies(), b.frequencies());
    0.5 * fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Histogram range from reference inter-event times: 99th percentile.
pub fn histogram_upper(reference: &[EventSequence]) -> Option<f64> {
    let all: Vec<f64> = reference
        .iter()
        .flat_map(|s| s.inter_times().iter().copied())
        .collect();
    quantile(&all, HIST_QUANTILE)
}

pub fn time_histogram(seqs: &[EventSequence], upper: f64) -> Histogram {
    let mut h = Histogram::new(upper, HIST_BINS);
    for s in seqs {
        h.extend(s.inter_times().iter().copied());
    }
    h
}

pub fn mark_frequencies(seqs: &[EventSequence], num_marks: usize) -> Vec<f64> {
    let mut counts = vec![0u64; num_marks];
    for s in seqs {
        for &k in s.marks() {
            counts[k] += 1;
        }
    }
    let n = counts.iter().sum::<u64>().max(1) as f64;
    counts.iter().map(|&c| c as f64 / n).collect()
}

pub fn mark_frequency_csv(freqs: &[f64]) -> String {
    let mut out = String::from("mark,frequency\n");
    for (k, f) in freqs.iter().enumerate() {
        out.push_str(&format!("{k},{f}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub times: Histogram,
    pub marks: Vec<f64>,
}

/// Histogram of all inter-event times and per-mark relative frequencies.
/// The bin range comes from `reference` when given, else from `seqs`.
pub fn distribution_summary(
    seqs: &[EventSequence],
    reference: Option<&[EventSequence]>,
) -> Result<DistributionSummary, MetricError> {
    let first = seqs.first().ok_or(MetricError::Empty)?;
    let upper = histogram_upper(reference.unwrap_or(seqs)).ok_or(MetricError::Empty)?;
    Ok(DistributionSummary {
        times: time_histogram(seqs, upper),
        marks: mark_frequencies(seqs, first.vocab_size()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(dts: &[f64], marks: &[usize], m: usize) -> EventSequence {
        EventSequence::new(dts.to_vec(), marks.to_vec(), m).unwrap()
    }

    #[test]
    fn otd_examples() {
        let s = seq(&[0.5, 1.0, 0.2], &[0, 1, 1], 2);
        assert_eq!(otd(&s, &s, &OtdConfig::default()).unwrap(), 0.0);
        let empty = EventSequence::empty(2).unwrap();
        assert_eq!(otd(&empty, &s, &OtdConfig::default()).unwrap(), 3.0);
        let pred = seq(&[1.0, 1.0], &[0, 1], 2);
        let truth = seq(&[1.5], &[0], 2);
        let cfg = OtdConfig { delete_cost: 2.0 };
        assert!((otd(&pred, &truth, &cfg).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn otd_prefers_deletion_over_distant_match() {
        let a = seq(&[10.0], &[0], 1);
        let b = seq(&[1.0], &[0], 1);
        assert_eq!(otd(&a, &b, &OtdConfig::default()).unwrap(), 2.0);
    }

    #[test]
    fn otd_rejects_bad_inputs() {
        let a = seq(&[1.0], &[0], 1);
        let b = seq(&[1.0], &[0], 2);
        assert!(otd(&a, &b, &OtdConfig::default()).is_err());
        assert!(otd(&a, &a, &OtdConfig { delete_cost: 0.0 }).is_err());
    }

    #[test]
    fn rmse_x_examples() {
        let p = seq(&[1.0, 2.0], &[0, 0], 1);
        let t = seq(&[1.0, 4.0], &[0, 0], 1);
        assert!((rmse_x(&p, &t).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse_x(&t, &t).unwrap(), 0.0);
        let ps = seq(&[3.0, 6.0], &[0, 0], 1);
        let ts = seq(&[3.0, 12.0], &[0, 0], 1);
        assert!((rmse_x(&ps, &ts).unwrap() - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(rmse_x(&p, &seq(&[1.0], &[0], 1)).is_err());
    }

    #[test]
    fn rmse_y_examples() {
        let p = seq(&[1.0; 3], &[0, 0, 1], 2);
        let t = seq(&[1.0; 3], &[0, 1, 1], 2);
        assert!((rmse_y(&p, &t, MarkError::Counts).unwrap() - 1.0).abs() < 1e-12);
        let shuffled = seq(&[1.0; 3], &[1, 0, 0], 2);
        assert_eq!(rmse_y(&p, &shuffled, MarkError::Counts).unwrap(), 0.0);
        let l = 7;
        let zeros = seq(&vec![1.0; l], &vec![0; l], 2);
        let ones = seq(&vec![1.0; l], &vec![1; l], 2);
        assert!((rmse_y(&zeros, &ones, MarkError::Counts).unwrap() - l as f64).abs() < 1e-12);
        assert_eq!(rmse_y(&zeros, &ones, MarkError::Positional).unwrap(), 1.0);
    }

    #[test]
    fn smape_examples() {
        let p = seq(&[2.0], &[0], 1);
        let t = seq(&[1.0], &[0], 1);
        assert!((smape(&p, &t).unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(smape(&t, &t).unwrap(), 0.0);
        let tiny = seq(&[1e-300, 1.0], &[0, 0], 1);
        let big = seq(&[1.0, 1.0], &[0, 0], 1);
        assert!((smape(&tiny, &big).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn summary_uses_sample_sd() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Summary::of(&[3.0]).sd, 0.0);
    }

    #[test]
    fn evaluate_identical_is_zero() {
        let a = vec![seq(&[0.5, 1.0], &[0, 1], 2), seq(&[2.0, 0.1], &[1, 1], 2)];
        let r = evaluate(&a, &a, &EvalConfig::default()).unwrap();
        assert_eq!(r.num_windows, 2);
        for s in [r.otd, r.rmse_x, r.rmse_y, r.smape] {
            assert_eq!(s, Summary { mean: 0.0, sd: 0.0 });
        }
        assert!(matches!(
            evaluate(&a, &a[..1], &EvalConfig::default()),
            Err(MetricError::WindowCountMismatch { .. })
        ));
    }

    #[test]
    fn constant_times_fill_one_bin() {
        let s = vec![seq(&[1.0; 10], &[0; 10], 1)];
        let d = distribution_summary(&s, None).unwrap();
        assert_eq!(d.marks, vec![1.0]);
        assert_eq!(d.times.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(d.times.overflow, 0);
        assert_eq!(d.times.total(), 10);
    }

    #[test]
    fn histogram_csv_and_tv() {
        let mut a = Histogram::new(1.0, 2);
        a.extend([0.1, 0.7, 3.0]);
        assert_eq!(a.counts, vec![1, 1]);
        assert_eq!(a.overflow, 1);
        assert!(a.to_csv().starts_with("bin_lo,bin_hi,count,frequency\n0,0.5,1,"));
        assert_eq!(total_variation(&a, &a), 0.0);
        let mut b = Histogram::new(1.0, 2);
        b.extend([5.0]);
        assert!((total_variation(&a, &b) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), Some(2.0));
        assert_eq!(quantile(&[0.0, 10.0], 0.25), Some(2.5));
        assert_eq!(quantile(&[], 0.5), None);
    }
}
