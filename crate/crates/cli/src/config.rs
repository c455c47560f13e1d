use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use markflow::metrics::EvalConfig;
use markflow::model::{ModelConfig, TrainConfig};
use markflow::sampler::SamplerConfig;
use markflow::synthgen::Process;
use serde::{Deserialize, Serialize};

/// Synthetic data for `simulate` and `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub process: Process,
    pub train_sequences: usize,
    pub test_sequences: usize,
    /// Events per simulated sequence, context plus horizon.
    pub length: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            process: Process::Poisson {
                rate: 1.0,
                mark_probs: vec![1.0 / 3.0; 3],
            },
            train_sequences: 1000,
            test_sequences: 200,
            length: 40,
        }
    }
}

/// Optional file locations. Command-line paths take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
}

/// Everything one pipeline run needs. One `seed` drives every random
/// stream; the `seed` fields of the `train` and `sampler` sections are
/// overwritten with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
    pub data: DataConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 20,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            eval: EvalConfig::default(),
            data: DataConfig::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub steps: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(h) = overrides.horizon {
            cfg.horizon = h;
        }
        if let Some(s) = overrides.steps {
            cfg.sampler.steps = s;
        }
        let seed = cfg.seed;
        cfg.with_seed(seed)
    }

    /// Copy with every derived seed and the horizon made consistent.
    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.seed = seed;
        self.train.seed = seed;
        self.sampler.seed = seed;
        self.model.horizon = self.horizon;
        if self.horizon == 0 {
            bail!(markflow::Error::Config("horizon must be at least 1".into()));
        }
        if !matches!(self.horizon, 5 | 10 | 20) {
            log::info!("horizon {} is outside the usual 5/10/20", self.horizon);
        }
        self.sampler.validate()?;
        self.eval.otd.validate().map_err(markflow::Error::from)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_everywhere() {
        let cfg = RunConfig::load(
            None,
            Overrides {
                seed: Some(7),
                horizon: Some(5),
                steps: Some(3),
            },
        )
        .unwrap();
        assert_eq!((cfg.train.seed, cfg.sampler.seed), (7, 7));
        assert_eq!(cfg.model.horizon, 5);
        assert_eq!(cfg.sampler.steps, 3);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"horizon":10,"train":{"epochs":2,"adam":{"lr":0.01}},"data":{"process":{"kind":"poisson","rate":2.0,"mark_probs":[1.0]}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.adam.lr, 0.01);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.data.process.num_marks(), 1);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn zero_steps_rejected() {
        let r = RunConfig::load(
            None,
            Overrides {
                steps: Some(0),
                ..Overrides::default()
            },
        );
        assert!(r.is_err());
    }
}
