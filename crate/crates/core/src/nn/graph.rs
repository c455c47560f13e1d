//! Reverse-mode tape over row-major matrices.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list visits every node after all of its consumers. Every forward value and
//! every backward gradient is checked for NaN/Inf as it is produced.

use std::collections::{BTreeMap, HashMap};

use matrixmultiply::dgemm;

use super::{NnError, ParamStore};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Tanh(Var),
    Sigmoid(Var),
    Silu(Var),
    Concat(Vec<Var>),
    GatherRows { src: Var, index: Vec<usize> },
    Blend { fresh: Var, stale: Var, mask: Vec<bool> },
    Mse { pred: Var, target: Vec<f64> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    WeightedSum(Vec<(Var, f64)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Silu(_) => "silu",
            Op::Concat(_) => "concat",
            Op::GatherRows { .. } => "gather_rows",
            Op::Blend { .. } => "blend",
            Op::Mse { .. } => "mse",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::WeightedSum(_) => "weighted_sum",
        }
    }
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn check_finite(op: &str, values: &[f64]) -> Result<(), NnError> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite { op: op.to_string() })
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c (+)= a · b` for row-major `a: m×k`, `b: k×n`, with explicit strides so
/// transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the assert above bounds every element the strides can reach.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Result<Var, NnError> {
        debug_assert_eq!(rows * cols, value.len());
        check_finite(op.name(), &value)?;
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let n = self.node(v);
        debug_assert_eq!(n.value.len(), 1);
        n.value[0]
    }

    /// Constant (non-differentiated) input.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var, NnError> {
        if rows * cols != data.len() {
            return Err(NnError::shape(
                "input",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        self.push(rows, cols, data, Op::Input)
    }

    /// Reads a parameter from the store. Repeated reads of the same path
    /// return the same node, so its gradient is accumulated once.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NnError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store.get(name)?;
        let (rows, cols) = t.matrix_dims();
        let v = self.push(rows, cols, t.data().to_vec(), Op::Param)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(NnError::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a),
            (k as isize, 1),
            self.value(b),
            (n as isize, 1),
            0.0,
            &mut out,
        );
        self.push(m, n, out, Op::MatMul(a, b))
    }

    /// Adds a `1×n` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (m, n) = self.shape(x);
        if self.shape(bias) != (1, n) {
            return Err(NnError::shape(
                "add_bias",
                format!("{m}x{n} + {:?}", self.shape(bias)),
            ));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n.max(1)) {
            row.iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
        }
        self.push(m, n, out, Op::AddBias(x, bias))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(usize, usize), NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NnError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (m, n) = self.same_shape("add", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(m, n, out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (m, n) = self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        self.push(m, n, out, Op::Mul(a, b))
    }

    /// `scale · x + shift`, element-wise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var, NnError> {
        let (m, n) = self.shape(x);
        let out = self.value(x).iter().map(|v| scale * v + shift).collect();
        self.push(m, n, out, Op::Affine { x, scale })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NnError> {
        let (m, n) = self.shape(x);
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(m, n, out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NnError> {
        let (m, n) = self.shape(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(m, n, out, Op::Sigmoid(x))
    }

    pub fn silu(&mut self, x: Var) -> Result<Var, NnError> {
        let (m, n) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v * sigmoid(v)).collect();
        self.push(m, n, out, Op::Silu(x))
    }

    /// Column-wise concatenation of blocks with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let Some(&first) = parts.first() else {
            return Err(NnError::shape("concat", "no inputs"));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(NnError::shape("concat", format!("row counts {rows} vs {r}")));
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        self.push(rows, cols, out, Op::Concat(parts.to_vec()))
    }

    /// `out[i] = src[index[i]]`, row-wise. Embedding lookup and row
    /// broadcasting are both gathers.
    pub fn gather_rows(&mut self, src: Var, index: &[usize]) -> Result<Var, NnError> {
        let (rows, cols) = self.shape(src);
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= rows {
                return Err(NnError::Index {
                    op: "gather_rows".into(),
                    index: i,
                    rows,
                });
            }
            out.extend_from_slice(&self.value(src)[i * cols..(i + 1) * cols]);
        }
        self.push(
            index.len(),
            cols,
            out,
            Op::GatherRows {
                src,
                index: index.to_vec(),
            },
        )
    }

    /// Row `r` is taken from `fresh` where `mask[r]`, otherwise from `stale`.
    pub fn blend(&mut self, fresh: Var, stale: Var, mask: &[bool]) -> Result<Var, NnError> {
        let (m, n) = self.same_shape("blend", fresh, stale)?;
        if mask.len() != m {
            return Err(NnError::shape("blend", format!("mask {} for {m} rows", mask.len())));
        }
        let mut out = Vec::with_capacity(m * n);
        for (r, &keep) in mask.iter().enumerate() {
            let src = if keep { fresh } else { stale };
            out.extend_from_slice(&self.value(src)[r * n..(r + 1) * n]);
        }
        self.push(
            m,
            n,
            out,
            Op::Blend {
                fresh,
                stale,
                mask: mask.to_vec(),
            },
        )
    }

    /// Mean over all entries of `(pred − target)²`, as a `1×1` node.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, NnError> {
        let p = self.value(pred);
        if p.len() != target.len() || p.is_empty() {
            return Err(NnError::shape(
                "mse",
                format!("{} predictions vs {} targets", p.len(), target.len()),
            ));
        }
        let loss = p
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        self.push(
            1,
            1,
            vec![loss],
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
        )
    }

    /// Mean over rows of `−log softmax(logits)[label]`, as a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
        let (m, n) = self.shape(logits);
        if labels.len() != m || m == 0 {
            return Err(NnError::shape(
                "cross_entropy",
                format!("{} labels for {m} rows", labels.len()),
            ));
        }
        let z = self.value(logits);
        let mut probs = Vec::with_capacity(m * n);
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= n {
                return Err(NnError::Index {
                    op: "cross_entropy".into(),
                    index: label,
                    rows: n,
                });
            }
            let row = &z[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum.ln();
            loss += log_norm - row[label];
            probs.extend(row.iter().map(|v| (v - log_norm).exp()));
        }
        loss /= m as f64;
        self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// `Σ wᵢ · xᵢ` over nodes of one shape.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var, NnError> {
        let Some(&(first, _)) = terms.first() else {
            return Err(NnError::shape("weighted_sum", "no terms"));
        };
        let (m, n) = self.shape(first);
        let mut out = vec![0.0; m * n];
        for &(v, w) in terms {
            if self.shape(v) != (m, n) {
                return Err(NnError::shape(
                    "weighted_sum",
                    format!("{:?} vs {:?}", self.shape(v), (m, n)),
                ));
            }
            out.iter_mut()
                .zip(self.value(v))
                .for_each(|(o, x)| *o += w * x);
        }
        self.push(m, n, out, Op::WeightedSum(terms.to_vec()))
    }

    /// Reverse sweep from a `1×1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        if self.shape(loss) != (1, 1) {
            return Err(NnError::shape("backward", "loss must be 1x1"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            check_finite(&format!("backward/{}", node.op.name()), &g)?;
            let (m, n) = (node.rows, node.cols);
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMul(a, b) => {
                    let k = self.shape(*a).1;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = grads[a.0].get_or_insert_with(|| vec![0.0; m * k]);
                    // dA = dC · Bᵀ
                    gemm(m, n, k, &g, (n as isize, 1), bv, (1, n as isize), 1.0, ga);
                    let gb = grads[b.0].get_or_insert_with(|| vec![0.0; k * n]);
                    // dB = Aᵀ · dC
                    gemm(k, m, n, av, (1, k as isize), &g, (n as isize, 1), 1.0, gb);
                }
                Op::AddBias(x, bias) => {
                    accumulate(&mut grads[x.0], &g);
                    let gb = grads[bias.0].get_or_insert_with(|| vec![0.0; n]);
                    for row in g.chunks(n.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(self.value(*b)).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(self.value(*a)).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Affine { x, scale } => {
                    let gx: Vec<f64> = g.iter().map(|v| v * scale).collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Tanh(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(d, y)| d * (1.0 - y * y))
                        .collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Sigmoid(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(d, y)| d * y * (1.0 - y))
                        .collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Silu(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(self.value(*x))
                        .map(|(d, &v)| {
                            let s = sigmoid(v);
                            d * (s + v * s * (1.0 - s))
                        })
                        .collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let c = self.shape(*p).1;
                        let gp = grads[p.0].get_or_insert_with(|| vec![0.0; m * c]);
                        for r in 0..m {
                            let src = &g[r * n + offset..r * n + offset + c];
                            gp[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(o, v)| *o += v);
                        }
                        offset += c;
                    }
                }
                Op::GatherRows { src, index } => {
                    let (rows, cols) = self.shape(*src);
                    let gs = grads[src.0].get_or_insert_with(|| vec![0.0; rows * cols]);
                    for (r, &i) in index.iter().enumerate() {
                        gs[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(o, v)| *o += v);
                    }
                }
                Op::Blend { fresh, stale, mask } => {
                    let mut gf = vec![0.0; m * n];
                    let mut gs = vec![0.0; m * n];
                    for (r, &keep) in mask.iter().enumerate() {
                        let dst = if keep { &mut gf } else { &mut gs };
                        dst[r * n..(r + 1) * n].copy_from_slice(&g[r * n..(r + 1) * n]);
                    }
                    accumulate(&mut grads[fresh.0], &gf);
                    accumulate(&mut grads[stale.0], &gs);
                }
                Op::Mse { pred, target } => {
                    let scale = 2.0 * g[0] / target.len() as f64;
                    let gp: Vec<f64> = self
                        .value(*pred)
                        .iter()
                        .zip(target)
                        .map(|(p, t)| scale * (p - t))
                        .collect();
                    accumulate(&mut grads[pred.0], &gp);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let (rows, cols) = self.shape(*logits);
                    let scale = g[0] / rows as f64;
                    let mut gl: Vec<f64> = probs.iter().map(|p| scale * p).collect();
                    for (r, &label) in labels.iter().enumerate() {
                        gl[r * cols + label] -= scale;
                    }
                    accumulate(&mut grads[logits.0], &gl);
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        let gv: Vec<f64> = g.iter().map(|x| w * x).collect();
                        accumulate(&mut grads[v.0], &gv);
                    }
                }
            }
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            params: self
                .params
                .iter()
                .map(|(name, v)| (name.clone(), *v))
                .collect(),
        })
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    /// Gradient of the loss with respect to any node on the path to it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients for every parameter read by the graph; parameters that did
    /// not influence the loss get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Result<BTreeMap<String, Vec<f64>>, NnError> {
        let mut out = BTreeMap::new();
        for (name, v) in &self.params {
            let g = match self.wrt(*v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; store.get(name)?.len()],
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Adds parameter gradients into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<(), NnError> {
        for (name, g) in self.param_grads(store)? {
            store.get_mut(&name)?.add_grad(&g);
        }
        Ok(())
    }
}
