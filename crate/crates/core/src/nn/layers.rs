use serde::{Deserialize, Serialize};

use super::{Graph, NnError, ParamStore, Tensor, Var};
use crate::rng::{self, FlowRng};

/// Hidden-layer nonlinearity. Both choices are smooth, which the midpoint
/// integrator relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Silu,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Silu => g.silu(x),
        }
    }
}

fn glorot(rng: &mut FlowRng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| (2.0 * rng::uniform(rng) - 1.0) * limit)
        .collect()
}

/// Affine layers `sizes[0] → sizes[1] → … → sizes[n]` with the activation
/// after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    name: String,
    sizes: Vec<usize>,
    activation: Activation,
}

impl Mlp {
    pub fn new(name: impl Into<String>, sizes: Vec<usize>, activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            name: name.into(),
            sizes,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn weight(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.name)
    }

    fn bias(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.name)
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.sizes
            .windows(2)
            .enumerate()
            .flat_map(|(i, w)| {
                [
                    (self.weight(i), vec![w[0], w[1]]),
                    (self.bias(i), vec![w[1]]),
                ]
            })
            .collect()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut FlowRng) {
        for (i, w) in self.sizes.windows(2).enumerate() {
            let data = glorot(rng, w[0], w[1]);
            store.insert(self.weight(i), Tensor::new(vec![w[0], w[1]], data).unwrap());
            store.insert(self.bias(i), Tensor::zeros(vec![w[1]]));
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, input: Var) -> Result<Var, NnError> {
        let layers = self.sizes.len() - 1;
        let mut h = input;
        for i in 0..layers {
            let layer = format!("{}.{i}", self.name);
            let w = g.param(store, &self.weight(i))?;
            let b = g.param(store, &self.bias(i))?;
            h = g.matmul(h, w).map_err(|e| e.in_layer(&layer))?;
            h = g.add_bias(h, b).map_err(|e| e.in_layer(&layer))?;
            if i + 1 < layers {
                h = self.activation.apply(g, h).map_err(|e| e.in_layer(&layer))?;
            }
        }
        Ok(h)
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// n  = tanh(x W_n + (r ⊙ h) U_n + b_n)
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    name: String,
    input_dim: usize,
    hidden_dim: usize,
}

const GATES: [&str; 3] = ["update", "reset", "candidate"];

impl GruCell {
    pub fn new(name: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            name: name.into(),
            input_dim,
            hidden_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn names(&self, gate: &str) -> [String; 3] {
        [
            format!("{}.{gate}.input", self.name),
            format!("{}.{gate}.hidden", self.name),
            format!("{}.{gate}.bias", self.name),
        ]
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (i, d) = (self.input_dim, self.hidden_dim);
        GATES
            .iter()
            .flat_map(|gate| {
                let [w, u, b] = self.names(gate);
                [(w, vec![i, d]), (u, vec![d, d]), (b, vec![d])]
            })
            .collect()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut FlowRng) {
        let (i, d) = (self.input_dim, self.hidden_dim);
        for gate in GATES {
            let [w, u, b] = self.names(gate);
            store.insert(w, Tensor::new(vec![i, d], glorot(rng, i, d)).unwrap());
            store.insert(u, Tensor::new(vec![d, d], glorot(rng, d, d)).unwrap());
            store.insert(b, Tensor::zeros(vec![d]));
        }
    }

    fn gate_preact(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        gate: &str,
        x: Var,
        h: Var,
    ) -> Result<Var, NnError> {
        let [w, u, b] = self.names(gate);
        let (w, u, b) = (g.param(store, &w)?, g.param(store, &u)?, g.param(store, &b)?);
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        g.add_bias(s, b)
    }

    /// One step for a batch of rows. Rows with `mask[r] == false` keep their
    /// previous hidden state, which lets contexts of different lengths share
    /// a batch.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        h: Var,
        mask: Option<&[bool]>,
    ) -> Result<Var, NnError> {
        let run = |g: &mut Graph| -> Result<Var, NnError> {
            let (bx, dx) = g.shape(x);
            let (bh, dh) = g.shape(h);
            if dx != self.input_dim || dh != self.hidden_dim || bx != bh {
                return Err(NnError::shape(
                    "step",
                    format!(
                        "input {bx}x{dx}, hidden {bh}x{dh}; expected input dim {} and hidden dim {}",
                        self.input_dim, self.hidden_dim
                    ),
                ));
            }
            let z = self.gate_preact(g, store, "update", x, h)?;
            let z = g.sigmoid(z)?;
            let r = self.gate_preact(g, store, "reset", x, h)?;
            let r = g.sigmoid(r)?;
            let rh = g.mul(r, h)?;
            let n = self.gate_preact(g, store, "candidate", x, rh)?;
            let n = g.tanh(n)?;
            let keep = g.affine(z, -1.0, 1.0)?;
            let a = g.mul(keep, n)?;
            let b = g.mul(z, h)?;
            let next = g.add(a, b)?;
            match mask {
                Some(m) => g.blend(next, h, m),
                None => Ok(next),
            }
        };
        run(g).map_err(|e| e.in_layer(&self.name))
    }
}

/// Trainable lookup table `vocab × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    name: String,
    vocab: usize,
    dim: usize,
}

impl Embedding {
    pub fn new(name: impl Into<String>, vocab: usize, dim: usize) -> Self {
        Self {
            name: name.into(),
            vocab,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn table(&self) -> String {
        format!("{}.table", self.name)
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        vec![(self.table(), vec![self.vocab, self.dim])]
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut FlowRng) {
        let data = (0..self.vocab * self.dim)
            .map(|_| 2.0 * rng::uniform(rng) - 1.0)
            .collect();
        store.insert(
            self.table(),
            Tensor::new(vec![self.vocab, self.dim], data).unwrap(),
        );
    }

    pub fn lookup(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var, NnError> {
        let t = g.param(store, &self.table())?;
        g.gather_rows(t, ids).map_err(|e| e.in_layer(&self.name))
    }
}
