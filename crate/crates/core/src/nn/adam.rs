use serde::{Deserialize, Serialize};

use super::tensor::Moments;
use super::{NnError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter in the store, then
/// zeroes the gradients. Fails without touching anything if some parameter
/// has no gradient.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<(), NnError> {
    if let Some((name, _)) = store.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(NnError::MissingGrad(name.clone()));
    }
    store.step += 1;
    let t = store.step as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);

    let mut moments = std::mem::take(&mut store.moments);
    for (name, param) in store.params_mut() {
        let n = param.len();
        let state = moments.entry(name.clone()).or_insert_with(|| Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        let grad = param.grad.take().expect("checked above");
        let data = param.data_mut();
        for i in 0..n {
            let g = grad[i];
            state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
            state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = state.m[i] / correction1;
            let v_hat = state.v[i] / correction2;
            data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        param.grad = Some(vec![0.0; n]);
    }
    store.moments = moments;
    Ok(())
}
