use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{FlowModel, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::FORMAT_VERSION;

/// Model configuration plus parameters, stored as
/// `{"version":1,"seed":..,"config":{..},"params":{"path":{"shape":[..],"data":[..]}}}`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub seed: u64,
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(seed: u64, config: ModelConfig, params: ParamStore) -> Self {
        Self {
            seed,
            config,
            params,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "version": FORMAT_VERSION,
            "seed": self.seed,
            "config": self.config,
            "params": self.params.to_json(),
        })
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("checkpoint serializes")
    }

    /// Parses and validates parameter names and shapes against the config.
    pub fn from_json(mut value: Value) -> Result<Self> {
        let version = value
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Checkpoint("missing version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let seed = value.get("seed").and_then(Value::as_u64).unwrap_or(0);
        let config: ModelConfig = serde_json::from_value(
            value
                .get_mut("config")
                .map(Value::take)
                .ok_or_else(|| Error::Checkpoint("missing config".into()))?,
        )?;
        let params = ParamStore::from_json(
            value
                .get_mut("params")
                .map(Value::take)
                .ok_or_else(|| Error::Checkpoint("missing params".into()))?,
        )?;
        let model = FlowModel::new(config.clone())?;
        let expected = model.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in expected {
            let t = params
                .get(&name)
                .map_err(|_| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, config implies {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            seed,
            config,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_string_pretty())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(serde_json::from_str(&text)?)
    }

    pub fn model(&self) -> Result<FlowModel> {
        FlowModel::new(self.config.clone())
    }
}
