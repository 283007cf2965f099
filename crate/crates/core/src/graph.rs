//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] records one forward pass (define-by-run); node indices are
//! already a topological order, so the backward sweep is a single reverse
//! walk. Parameters live outside the graph in a [`ParamStore`] and are bound
//! in as leaves; after [`Graph::backward`] their gradients are scattered back
//! through [`Graph::accumulate_param_grads`]. One graph per sample keeps
//! batching trivial: run the items, sum their parameter gradients, step.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul, Scalar, Tensor};

/// Handle to a named parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Flat collection of named parameter tensors.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Zeroed gradient buffers matching every parameter.
    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.entries
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Node handle in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddBiasRow { x: usize, bias: usize },
    Scale { x: usize, c: T },
    AddScalar { x: usize },
    Relu { x: usize },
    Sigmoid { x: usize },
    Tanh { x: usize },
    Exp { x: usize },
    Softmax { x: usize },
    LayerNorm { x: usize, gain: usize, bias: usize, inv_std: Vec<T>, mean: Vec<T> },
    Dropout { x: usize, mask: Vec<T> },
    CrossEntropy { logits: usize, probs: Tensor<T>, target: Tensor<T> },
    Sum { x: usize },
    Mean { x: usize },
    ConcatRows { parts: Vec<usize> },
    SliceRows { x: usize, start: usize },
    ConcatCols { parts: Vec<usize> },
    SliceCols { x: usize, start: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// One recorded forward pass over a parameter store.
pub struct Graph<'s, T: Scalar> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    bindings: Vec<(ParamId, usize)>,
}

impl<'s, T: Scalar> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            grads: Vec::new(),
            bindings: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target w.r.t. `v` (zeros if unreached).
    pub fn grad(&self, v: Var) -> Tensor<T> {
        match &self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => {
                let (r, c) = self.shape(v);
                Tensor::zeros(r, c)
            }
        }
    }

    /// Bind a store parameter as a gradient-tracked leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        let v = self.push(self.store.get(id).clone(), Op::Leaf, true);
        self.bindings.push((id, v.0));
        v
    }

    /// Leaf with no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Gradient-tracked leaf not bound to the store (used by gradient checks).
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    // ---- elementwise and linear ops -------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let v = matmul(self.value(a), self.value(b), ta, tb)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::MatMul { a: a.0, b: b.0, ta, tb }, ng))
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                details: format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add { a: a.0, b: b.0 }, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("sub", a, b)?;
        let bv = self.value(b);
        let v = Tensor::from_vec(
            bv.rows(),
            bv.cols(),
            self.value(a)
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| x.sub(y))
                .collect(),
        )?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Sub { a: a.0, b: b.0 }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mul", a, b)?;
        let bv = self.value(b);
        let v = Tensor::from_vec(
            bv.rows(),
            bv.cols(),
            self.value(a)
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| x.mul(y))
                .collect(),
        )?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Mul { a: a.0, b: b.0 }, ng))
    }

    /// `[n,m] + [1,m]`, broadcasting the bias row over every row of `x`.
    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, m) = self.shape(x);
        if self.shape(bias) != (1, m) {
            return Err(Error::ShapeMismatch {
                op: "add_bias_row",
                details: format!("bias {:?} does not broadcast over {:?}", self.shape(bias), self.shape(x)),
            });
        }
        let bv = self.value(bias).clone();
        let xv = self.value(x);
        let mut v = xv.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            for (j, b) in bv.data().iter().enumerate() {
                row[j] = row[j].add(*b);
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(v, Op::AddBiasRow { x: x.0, bias: bias.0 }, ng))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|a| a.mul(c));
        let ng = self.needs(x);
        self.push(v, Op::Scale { x: x.0, c }, ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|a| a.add(c));
        let ng = self.needs(x);
        self.push(v, Op::AddScalar { x: x.0 }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.maximum(T::ZERO));
        let ng = self.needs(x);
        self.push(v, Op::Relu { x: x.0 }, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| {
            let e = a.to_f64();
            T::from_f64(1.0 / (1.0 + (-e).exp()))
        });
        let ng = self.needs(x);
        self.push(v, Op::Sigmoid { x: x.0 }, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.tanh());
        let ng = self.needs(x);
        self.push(v, Op::Tanh { x: x.0 }, ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.exp());
        let ng = self.needs(x);
        self.push(v, Op::Exp { x: x.0 }, ng)
    }

    // ---- normalization, regularization, losses --------------------------

    /// Row-wise softmax with max-subtraction. Rejects NaN input.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.data().iter().any(|v| v.to_f64().is_nan()) {
            return Err(Error::InvalidArgument("softmax: NaN input".into()));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let mut max = T::neg_infinity();
            for v in row.iter() {
                max = max.maximum(*v);
            }
            let mut sum = T::ZERO;
            for v in row.iter_mut() {
                *v = v.sub(max).exp();
                sum = sum.add(*v);
            }
            for v in row.iter_mut() {
                *v = v.div(sum);
            }
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::Softmax { x: x.0 }, ng))
    }

    /// Per-row normalization to zero mean / unit variance, then affine
    /// `gain ⊙ x̂ + bias`. `gain` and `bias` are `1×m` rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (n, m) = self.shape(x);
        if m == 0 {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                details: "normalized axis length 0".into(),
            });
        }
        if self.shape(gain) != (1, m) || self.shape(bias) != (1, m) {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                details: format!("gain/bias must be 1x{}", m),
            });
        }
        let xv = self.value(x).clone();
        let gv = self.value(gain).clone();
        let bv = self.value(bias).clone();
        let inv_m = T::from_f64(1.0 / m as f64);
        let mut out = Tensor::zeros(n, m);
        let mut means = Vec::with_capacity(n);
        let mut inv_stds = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mut mean = T::ZERO;
            for v in row {
                mean = mean.add(*v);
            }
            mean = mean.mul(inv_m);
            let mut var = T::ZERO;
            for v in row {
                let d = v.sub(mean);
                var = var.add(d.mul(d));
            }
            var = var.mul(inv_m);
            let inv_std = T::ONE.div(var.add(eps).sqrt());
            let orow = out.row_mut(r);
            for j in 0..m {
                let xn = row[j].sub(mean).mul(inv_std);
                orow[j] = xn.mul(gv.data()[j]).add(bv.data()[j]);
            }
            means.push(mean);
            inv_stds.push(inv_std);
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            out,
            Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0, inv_std: inv_stds, mean: means },
            ng,
        ))
    }

    /// Inverted dropout: training mode zeroes entries with probability `rate`
    /// and scales survivors by `1/(1-rate)`; inference mode is the identity.
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                rate
            )));
        }
        if !training || rate == 0.0 {
            let v = self.value(x).clone();
            let ng = self.needs(x);
            let mask = vec![T::ONE; v.len()];
            return Ok(self.push(v, Op::Dropout { x: x.0, mask }, ng));
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::ZERO
                } else {
                    keep_scale
                }
            })
            .collect();
        let v = Tensor::from_vec(
            xv.rows(),
            xv.cols(),
            xv.data().iter().zip(&mask).map(|(&a, &m)| a.mul(m)).collect(),
        )?;
        let ng = self.needs(x);
        Ok(self.push(v, Op::Dropout { x: x.0, mask }, ng))
    }

    /// Sum over rows of `-log softmax(logits_row)[target_row]`.
    ///
    /// Targets must be valid one-hot rows; the result is a `1×1` scalar.
    #[allow(clippy::needless_range_loop)]
    pub fn cross_entropy(&mut self, logits: Var, target: &Tensor<T>) -> Result<Var> {
        let (n, k) = self.shape(logits);
        if target.shape() != (n, k) {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                details: format!("target {:?} vs logits {:?}", target.shape(), (n, k)),
            });
        }
        for r in 0..n {
            let row = target.row(r);
            let ones = row.iter().filter(|v| v.to_f64() == 1.0).count();
            let zeros = row.iter().filter(|v| v.to_f64() == 0.0).count();
            if ones != 1 || zeros != k - 1 {
                return Err(Error::MalformedToken(format!(
                    "cross_entropy target row {} is not one-hot",
                    r
                )));
            }
        }
        // Stable log-softmax per row; also cache probabilities for backward.
        let xv = self.value(logits);
        let mut probs = Tensor::zeros(n, k);
        let mut total = T::ZERO;
        for r in 0..n {
            let row = xv.row(r);
            let mut max = T::neg_infinity();
            for v in row {
                max = max.maximum(*v);
            }
            let mut sum = T::ZERO;
            let prow = probs.row_mut(r);
            for j in 0..k {
                let e = row[j].sub(max).exp();
                prow[j] = e;
                sum = sum.add(e);
            }
            let log_sum = sum.ln();
            for v in prow.iter_mut() {
                *v = v.div(sum);
            }
            for j in 0..k {
                if target.get(r, j).to_f64() == 1.0 {
                    // -log p = log_sum - (x - max)
                    total = total.add(log_sum.sub(row[j].sub(max)));
                }
            }
        }
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy { logits: logits.0, probs, target: target.clone() },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = T::ZERO;
        for v in self.value(x).data() {
            acc = acc.add(*v);
        }
        let ng = self.needs(x);
        self.push(Tensor::scalar(acc), Op::Sum { x: x.0 }, ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let mut acc = T::ZERO;
        for v in self.value(x).data() {
            acc = acc.add(*v);
        }
        let ng = self.needs(x);
        self.push(
            Tensor::scalar(acc.mul(T::from_f64(1.0 / n as f64))),
            Op::Mean { x: x.0 },
            ng,
        )
    }

    // ---- structural ops --------------------------------------------------

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_rows: no parts".into()));
        }
        let cols = self.shape(parts[0]).1;
        let mut rows = 0;
        for p in parts {
            if self.shape(*p).1 != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    details: "column counts differ".into(),
                });
            }
            rows += self.shape(*p).0;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(self.value(*p).data());
        }
        let v = Tensor::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(v, Op::ConcatRows { parts: parts.iter().map(|p| p.0).collect() }, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.shape(x);
        if start + len > n {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                details: format!("rows {}..{} out of 0..{}", start, start + len, n),
            });
        }
        let xv = self.value(x);
        let data = xv.data()[start * m..(start + len) * m].to_vec();
        let v = Tensor::from_vec(len, m, data)?;
        let ng = self.needs(x);
        Ok(self.push(v, Op::SliceRows { x: x.0, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_cols: no parts".into()));
        }
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for p in parts {
            if self.shape(*p).0 != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    details: "row counts differ".into(),
                });
            }
            cols += self.shape(*p).1;
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut at = 0;
        for p in parts {
            let pv = self.value(*p);
            let w = pv.cols();
            for r in 0..rows {
                out.row_mut(r)[at..at + w].copy_from_slice(pv.row(r));
            }
            at += w;
        }
        let ng = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out, Op::ConcatCols { parts: parts.iter().map(|p| p.0).collect() }, ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.shape(x);
        if start + len > m {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                details: format!("cols {}..{} out of 0..{}", start, start + len, m),
            });
        }
        let xv = self.value(x);
        let mut out = Tensor::zeros(n, len);
        for r in 0..n {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::SliceCols { x: x.0, start }, ng))
    }

    // ---- backward ---------------------------------------------------------

    fn accumulate(grads: &mut [Option<Tensor<T>>], idx: usize, g: Tensor<T>) {
        match &mut grads[idx] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar loss. Gradients for every reachable
    /// gradient-tracked node become available through [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                details: format!("loss must be 1x1, got {:?}", self.shape(loss)),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::ONE));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul { a, b, ta, tb } => {
                    let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                    let av = &self.nodes[a].value;
                    let bv = &self.nodes[b].value;
                    if self.nodes[a].needs_grad {
                        let da = if !ta {
                            matmul(&g, bv, false, !tb)?
                        } else if !tb {
                            matmul(bv, &g, false, true)?
                        } else {
                            matmul(bv, &g, true, true)?
                        };
                        Self::accumulate(&mut grads, a, da);
                    }
                    if self.nodes[b].needs_grad {
                        let db = if !tb {
                            matmul(av, &g, !ta, false)?
                        } else if !ta {
                            matmul(&g, av, true, false)?
                        } else {
                            matmul(&g, av, true, true)?
                        };
                        Self::accumulate(&mut grads, b, db);
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].needs_grad {
                        Self::accumulate(&mut grads, a, g.clone());
                    }
                    if self.nodes[b].needs_grad {
                        Self::accumulate(&mut grads, b, g);
                    }
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].needs_grad {
                        Self::accumulate(&mut grads, a, g.clone());
                    }
                    if self.nodes[b].needs_grad {
                        Self::accumulate(&mut grads, b, g.map(|v| T::ZERO.sub(v)));
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].needs_grad {
                        let bv = &self.nodes[b].value;
                        let da = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data().iter().zip(bv.data()).map(|(&x, &y)| x.mul(y)).collect(),
                        )?;
                        Self::accumulate(&mut grads, a, da);
                    }
                    if self.nodes[b].needs_grad {
                        let av = &self.nodes[a].value;
                        let db = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data().iter().zip(av.data()).map(|(&x, &y)| x.mul(y)).collect(),
                        )?;
                        Self::accumulate(&mut grads, b, db);
                    }
                }
                Op::AddBiasRow { x, bias } => {
                    let (x, bias) = (*x, *bias);
                    if self.nodes[x].needs_grad {
                        Self::accumulate(&mut grads, x, g.clone());
                    }
                    if self.nodes[bias].needs_grad {
                        let m = g.cols();
                        let mut db: Tensor<T> = Tensor::zeros(1, m);
                        for r in 0..g.rows() {
                            let row = g.row(r);
                            let drow = db.row_mut(0);
                            for j in 0..m {
                                drow[j] = drow[j].add(row[j]);
                            }
                        }
                        Self::accumulate(&mut grads, bias, db);
                    }
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    if self.nodes[x].needs_grad {
                        Self::accumulate(&mut grads, x, g.map(|v| v.mul(c)));
                    }
                }
                Op::AddScalar { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        Self::accumulate(&mut grads, x, g);
                    }
                }
                Op::Relu { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let xv = &self.nodes[x].value;
                        let dx = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data()
                                .iter()
                                .zip(xv.data())
                                .map(|(&gv, &v)| if v > T::ZERO { gv } else { T::ZERO })
                                .collect(),
                        )?;
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let yv = &self.nodes[id].value;
                        let dx = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data()
                                .iter()
                                .zip(yv.data())
                                .map(|(&gv, &y)| gv.mul(y).mul(T::ONE.sub(y)))
                                .collect(),
                        )?;
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::Tanh { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let yv = &self.nodes[id].value;
                        let dx = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data()
                                .iter()
                                .zip(yv.data())
                                .map(|(&gv, &y)| gv.mul(T::ONE.sub(y.mul(y))))
                                .collect(),
                        )?;
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::Exp { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let yv = &self.nodes[id].value;
                        let dx = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data().iter().zip(yv.data()).map(|(&gv, &y)| gv.mul(y)).collect(),
                        )?;
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::Softmax { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        // dx = y ⊙ (dy − Σ_j dy_j y_j) per row
                        let yv = &self.nodes[id].value;
                        let mut dx = Tensor::zeros(g.rows(), g.cols());
                        for r in 0..g.rows() {
                            let yrow = yv.row(r);
                            let grow = g.row(r);
                            let mut dot = T::ZERO;
                            for j in 0..g.cols() {
                                dot = dot.add(grow[j].mul(yrow[j]));
                            }
                            let drow = dx.row_mut(r);
                            for j in 0..g.cols() {
                                drow[j] = yrow[j].mul(grow[j].sub(dot));
                            }
                        }
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::LayerNorm { x, gain, bias, inv_std, mean } => {
                    let (x, gain, bias) = (*x, *gain, *bias);
                    let (n, m) = self.nodes[id].value.shape();
                    let xv = self.nodes[x].value.clone();
                    let gv = self.nodes[gain].value.clone();
                    let inv_std = inv_std.clone();
                    let mean = mean.clone();
                    let inv_m = T::from_f64(1.0 / m as f64);
                    if self.nodes[gain].needs_grad || self.nodes[bias].needs_grad {
                        let mut dgain: Tensor<T> = Tensor::zeros(1, m);
                        let mut dbias: Tensor<T> = Tensor::zeros(1, m);
                        for r in 0..n {
                            let grow = g.row(r);
                            let xrow = xv.row(r);
                            for j in 0..m {
                                let xn = xrow[j].sub(mean[r]).mul(inv_std[r]);
                                dgain.row_mut(0)[j] = dgain.row(0)[j].add(grow[j].mul(xn));
                                dbias.row_mut(0)[j] = dbias.row(0)[j].add(grow[j]);
                            }
                        }
                        if self.nodes[gain].needs_grad {
                            Self::accumulate(&mut grads, gain, dgain);
                        }
                        if self.nodes[bias].needs_grad {
                            Self::accumulate(&mut grads, bias, dbias);
                        }
                    }
                    if self.nodes[x].needs_grad {
                        let mut dx = Tensor::zeros(n, m);
                        for r in 0..n {
                            let grow = g.row(r);
                            let xrow = xv.row(r);
                            // dxn = dy ⊙ gain; then the standard two-correction form.
                            let mut sum_dxn = T::ZERO;
                            let mut sum_dxn_xn = T::ZERO;
                            let mut dxn = vec![T::ZERO; m];
                            for j in 0..m {
                                let xn = xrow[j].sub(mean[r]).mul(inv_std[r]);
                                dxn[j] = grow[j].mul(gv.data()[j]);
                                sum_dxn = sum_dxn.add(dxn[j]);
                                sum_dxn_xn = sum_dxn_xn.add(dxn[j].mul(xn));
                            }
                            let drow = dx.row_mut(r);
                            for j in 0..m {
                                let xn = xrow[j].sub(mean[r]).mul(inv_std[r]);
                                let t = dxn[j].sub(sum_dxn.mul(inv_m)).sub(xn.mul(sum_dxn_xn).mul(inv_m));
                                drow[j] = t.mul(inv_std[r]);
                            }
                        }
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::Dropout { x, mask } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let dx = Tensor::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data().iter().zip(mask.iter()).map(|(&gv, &m)| gv.mul(m)).collect(),
                        )?;
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::CrossEntropy { logits, probs, target } => {
                    let logits = *logits;
                    if self.nodes[logits].needs_grad {
                        let s = g.to_scalar()?;
                        let dx = Tensor::from_vec(
                            probs.rows(),
                            probs.cols(),
                            probs
                                .data()
                                .iter()
                                .zip(target.data())
                                .map(|(&p, &t)| p.sub(t).mul(s))
                                .collect(),
                        )?;
                        Self::accumulate(&mut grads, logits, dx);
                    }
                }
                Op::Sum { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let s = g.to_scalar()?;
                        let (r, c) = self.nodes[x].value.shape();
                        Self::accumulate(&mut grads, x, Tensor::filled(r, c, s));
                    }
                }
                Op::Mean { x } => {
                    let x = *x;
                    if self.nodes[x].needs_grad {
                        let s = g.to_scalar()?;
                        let (r, c) = self.nodes[x].value.shape();
                        let v = s.mul(T::from_f64(1.0 / (r * c) as f64));
                        Self::accumulate(&mut grads, x, Tensor::filled(r, c, v));
                    }
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let (pr, pc) = self.nodes[p].value.shape();
                        if self.nodes[p].needs_grad {
                            let data = g.data()[at * pc..(at + pr) * pc].to_vec();
                            Self::accumulate(&mut grads, p, Tensor::from_vec(pr, pc, data)?);
                        }
                        at += pr;
                    }
                }
                Op::SliceRows { x, start } => {
                    let (x, start) = (*x, *start);
                    if self.nodes[x].needs_grad {
                        let (xr, xc) = self.nodes[x].value.shape();
                        let mut dx = Tensor::zeros(xr, xc);
                        for r in 0..g.rows() {
                            dx.row_mut(start + r).copy_from_slice(g.row(r));
                        }
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let (pr, pc) = self.nodes[p].value.shape();
                        if self.nodes[p].needs_grad {
                            let mut dp = Tensor::zeros(pr, pc);
                            for r in 0..pr {
                                dp.row_mut(r).copy_from_slice(&g.row(r)[at..at + pc]);
                            }
                            Self::accumulate(&mut grads, p, dp);
                        }
                        at += pc;
                    }
                }
                Op::SliceCols { x, start } => {
                    let (x, start) = (*x, *start);
                    if self.nodes[x].needs_grad {
                        let (xr, xc) = self.nodes[x].value.shape();
                        let mut dx = Tensor::zeros(xr, xc);
                        for r in 0..g.rows() {
                            dx.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
                        }
                        Self::accumulate(&mut grads, x, dx);
                    }
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Scatter this graph's parameter-leaf gradients into `buf`
    /// (parallel to the store; see [`ParamStore::zero_grads`]).
    pub fn accumulate_param_grads(&self, buf: &mut [Tensor<T>]) {
        for (pid, node) in &self.bindings {
            if let Some(Some(g)) = self.grads.get(*node) {
                buf[pid.0].add_assign(g);
            }
        }
    }
}
