use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use markflow::events::{load_jsonl, make_windows, write_jsonl, Dataset, DatasetMeta, EventSequence};
use markflow::metrics::{self, distribution_summary, MetricReport, Summary};
use markflow::model::{train, Checkpoint, FlowModel, TrainReport};
use markflow::sampler::{generate, SamplerDiagnostics};
use markflow::synthgen::simulate_dataset;
use markflow::{Error, FORMAT_VERSION};
use serde_json::{json, Value};

use crate::config::RunConfig;

fn load(path: &Path, expected_vocab: Option<usize>) -> Result<Dataset> {
    let ds = load_jsonl(path, expected_vocab)
        .map_err(Error::from)
        .with_context(|| format!("loading {}", path.display()))?;
    for r in &ds.rejected {
        warn!("{}: line {} rejected: {}", path.display(), r.line, r.reason);
    }
    Ok(ds)
}

fn meta(vocab_size: usize, seed: u64, kind: &str) -> DatasetMeta {
    let mut m = DatasetMeta::new(vocab_size, Some(seed));
    m.extra.insert("kind".into(), json!(kind));
    m
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Dataset split: 0 for training data, 1 for held-out data.
pub fn simulate(cfg: &RunConfig, split: u64, count: usize, out: &Path) -> Result<()> {
    let d = &cfg.data;
    let seqs = simulate_dataset(&d.process, count, d.length, cfg.seed, split).map_err(Error::from)?;
    let mut m = meta(d.process.num_marks(), cfg.seed, "dataset");
    m.extra.insert("process".into(), serde_json::to_value(&d.process)?);
    m.extra.insert("split".into(), json!(split));
    write_jsonl(out, &m, &seqs).with_context(|| format!("writing {}", out.display()))?;
    info!("wrote {} sequences to {}", seqs.len(), out.display());
    Ok(())
}

/// Trains from scratch and writes the checkpoint plus a loss-trace CSV.
pub fn train_model(cfg: &RunConfig, data: &Path, out: &Path, trace: &Path) -> Result<TrainReport> {
    let ds = load(data, None)?;
    let mut mcfg = cfg.model.clone();
    if mcfg.num_marks != ds.vocab_size() {
        info!("taking num_marks = {} from the dataset", ds.vocab_size());
        mcfg.num_marks = ds.vocab_size();
    }
    let windows = make_windows(&ds.sequences, cfg.horizon);
    if windows.is_empty() {
        bail!(Error::Config(format!(
            "no sequence in {} is longer than the horizon {}",
            data.display(),
            cfg.horizon
        )));
    }
    info!("training on {} windows", windows.len());
    let model = FlowModel::new(mcfg.clone())?;
    let mut store = model.init_params(cfg.seed);
    let report = train(&model, &mut store, &windows, &cfg.train)?;
    Checkpoint::new(cfg.seed, mcfg, store)
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    fs::write(trace, report.to_csv()).with_context(|| format!("writing {}", trace.display()))?;
    Ok(report)
}

/// Forecasts every window of `data` with the checkpoint's horizon.
pub fn sample(
    cfg: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    out: &Path,
    truth_out: Option<&Path>,
) -> Result<SamplerDiagnostics> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let model = ck.model()?;
    let m = model.num_marks();
    let ds = load(data, Some(m))?;
    if ds.vocab_size() != m {
        bail!(Error::Config(format!(
            "checkpoint has {m} marks but {} declares {}",
            data.display(),
            ds.vocab_size()
        )));
    }
    let horizon = model.config().horizon;
    let windows = make_windows(&ds.sequences, horizon);
    if windows.len() < ds.sequences.len() {
        warn!(
            "{} of {} sequences too short for horizon {horizon}",
            ds.sequences.len() - windows.len(),
            ds.sequences.len()
        );
    }
    let contexts: Vec<&EventSequence> = windows.iter().map(|w| w.context()).collect();
    let gen = generate(&model, &ck.params, &contexts, &cfg.sampler)?;
    if !gen.diagnostics.is_clean() {
        bail!(Error::Numerical(format!(
            "sampler invariants violated: {:?}",
            gen.diagnostics
        )));
    }
    let mut pm = meta(m, cfg.seed, "predictions");
    pm.extra.insert("steps".into(), json!(cfg.sampler.steps));
    pm.extra.insert("horizon".into(), json!(horizon));
    write_jsonl(out, &pm, &gen.sequences).with_context(|| format!("writing {}", out.display()))?;
    if let Some(t) = truth_out {
        let truth: Vec<EventSequence> = windows.iter().map(|w| w.target().clone()).collect();
        let mut tm = meta(m, cfg.seed, "truth");
        tm.extra.insert("horizon".into(), json!(horizon));
        write_jsonl(t, &tm, &truth).with_context(|| format!("writing {}", t.display()))?;
    }
    info!("sampled {} windows", gen.sequences.len());
    Ok(gen.diagnostics)
}

fn summary_json(s: &Summary) -> Value {
    json!({ "mean": s.mean, "sd": s.sd })
}

/// Scores predictions against truth and writes `report.json`.
pub fn evaluate(cfg: &RunConfig, pred: &Path, truth: &Path, out: &Path) -> Result<MetricReport> {
    let p = load(pred, None)?;
    let t = load(truth, Some(p.vocab_size()))?;
    if p.vocab_size() != t.vocab_size() {
        bail!(Error::Config(format!(
            "prediction vocabulary {} differs from truth vocabulary {}",
            p.vocab_size(),
            t.vocab_size()
        )));
    }
    let report = metrics::evaluate(&p.sequences, &t.sequences, &cfg.eval).map_err(Error::from)?;
    let value = json!({
        "version": FORMAT_VERSION,
        "seed": p.meta.seed.unwrap_or(cfg.seed),
        "config": {
            "eval": cfg.eval,
            "predictions": pred.file_name().map(|f| f.to_string_lossy()),
            "truth": truth.file_name().map(|f| f.to_string_lossy()),
        },
        "num_windows": report.num_windows,
        "metrics": {
            "otd": summary_json(&report.otd),
            "rmse_x": summary_json(&report.rmse_x),
            "rmse_y": summary_json(&report.rmse_y),
            "smape": summary_json(&report.smape),
        },
        "windows": report.windows,
    });
    write_json(out, &value)?;
    info!(
        "otd {:.4} ± {:.4}, rmse_x {:.4}, rmse_y {:.4}, smape {:.2}",
        report.otd.mean, report.otd.sd, report.rmse_x.mean, report.rmse_y.mean, report.smape.mean
    );
    Ok(report)
}

/// Writes `<stem>.times.csv` and `<stem>.marks.csv` for each input.
pub fn hist(inputs: &[PathBuf], reference: Option<&Path>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let reference = reference.map(|r| load(r, None)).transpose()?;
    let mut written = Vec::new();
    for input in inputs {
        let ds = load(input, None)?;
        let summary = distribution_summary(&ds.sequences, reference.as_ref().map(|r| r.sequences.as_slice()))
            .map_err(Error::from)
            .with_context(|| format!("summarising {}", input.display()))?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        let times = out_dir.join(format!("{stem}.times.csv"));
        let marks = out_dir.join(format!("{stem}.marks.csv"));
        fs::write(&times, summary.times.to_csv())?;
        fs::write(&marks, metrics::mark_frequency_csv(&summary.marks))?;
        written.push(times);
        written.push(marks);
    }
    Ok(written)
}

/// Paths of one seed's artifacts inside the run directory.
pub struct RunFiles {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
    pub predictions: PathBuf,
    pub truth: PathBuf,
    pub report: PathBuf,
}

impl RunFiles {
    pub fn new(dir: &Path, cfg: &RunConfig) -> Self {
        Self {
            train_data: cfg.paths.train_data.clone().unwrap_or_else(|| dir.join("train.jsonl")),
            test_data: cfg.paths.test_data.clone().unwrap_or_else(|| dir.join("test.jsonl")),
            checkpoint: dir.join("checkpoint.json"),
            trace: dir.join("loss.csv"),
            predictions: dir.join("predictions.jsonl"),
            truth: dir.join("truth.jsonl"),
            report: dir.join("report.json"),
        }
    }
}

/// simulate → train → sample → evaluate for `seeds` consecutive seeds,
/// then `summary.json` with mean ± s.d. of the per-seed means.
pub fn run(cfg: &RunConfig, seeds: usize, out_dir: &Path) -> Result<Value> {
    if seeds == 0 {
        bail!(Error::Config("--seeds must be at least 1".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut per_seed = Vec::new();
    let mut means: [Vec<f64>; 4] = Default::default();
    for k in 0..seeds as u64 {
        let seed = cfg.seed + k;
        let c = cfg.clone().with_seed(seed)?;
        let dir = out_dir.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir)?;
        let files = RunFiles::new(&dir, &c);
        if c.paths.train_data.is_none() {
            simulate(&c, 0, c.data.train_sequences, &files.train_data)?;
        }
        if c.paths.test_data.is_none() {
            simulate(&c, 1, c.data.test_sequences, &files.test_data)?;
        }
        train_model(&c, &files.train_data, &files.checkpoint, &files.trace)?;
        sample(&c, &files.checkpoint, &files.test_data, &files.predictions, Some(&files.truth))?;
        let report = evaluate(&c, &files.predictions, &files.truth, &files.report)?;
        for (slot, s) in means.iter_mut().zip([report.otd, report.rmse_x, report.rmse_y, report.smape]) {
            slot.push(s.mean);
        }
        per_seed.push(json!({
            "seed": seed,
            "otd": report.otd.mean,
            "rmse_x": report.rmse_x.mean,
            "rmse_y": report.rmse_y.mean,
            "smape": report.smape.mean,
        }));
    }
    let [otd, rmse_x, rmse_y, smape] = means.map(|v| summary_json(&Summary::of(&v)));
    let summary = json!({
        "version": FORMAT_VERSION,
        "seed": cfg.seed,
        "num_seeds": seeds,
        "config": cfg,
        "per_seed": per_seed,
        "metrics": { "otd": otd, "rmse_x": rmse_x, "rmse_y": rmse_y, "smape": smape },
    });
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
