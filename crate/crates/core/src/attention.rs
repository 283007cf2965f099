//! Scaled dot-product attention, multi-head attention, the point-wise
//! feed-forward network, and the post-norm residual block shared by the
//! encoder and both decoder variants.
//!
//! There are no positional encodings anywhere: token features already carry
//! location, so the unmasked stack is permutation-equivariant. Causal use
//! adds an additive `-inf` bias above the diagonal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, ParamStore, Var};
use crate::nn::DenseLayer;
use crate::tensor::{Scalar, Tensor};

/// Architecture hyperparameters for one attention stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_blocks: usize,
    pub dropout: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            d_model: 512,
            n_heads: 8,
            d_ff: 2048,
            n_blocks: 4,
            dropout: 0.1,
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.n_blocks == 0 {
            violations.push("d_model, n_heads, d_ff, n_blocks must be positive".to_string());
        }
        if self.n_heads > 0 && !self.d_model.is_multiple_of(self.n_heads) {
            violations.push(format!(
                "d_model = {} not divisible by n_heads = {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            violations.push(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }
}

/// Attention weights captured from one forward pass,
/// indexed `[layer][head][query][key]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub weights: Vec<Vec<Vec<Vec<f32>>>>,
}

impl AttentionRecord {
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_heads(&self) -> usize {
        self.weights.first().map(|l| l.len()).unwrap_or(0)
    }

    /// Max deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for layer in &self.weights {
            for head in layer {
                for row in head {
                    let s: f64 = row.iter().map(|&v| v as f64).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }
}

/// Additive causal mask: `0` on and below the diagonal, `-inf` above.
pub fn causal_mask<T: Scalar>(n: usize) -> Tensor<T> {
    let mut m = Tensor::zeros(n, n);
    for q in 0..n {
        for k in (q + 1)..n {
            m.set(q, k, T::neg_infinity());
        }
    }
    m
}

/// `softmax(Q·Kᵀ/√d_k + mask) · V`; also returns the weight matrix.
///
/// Masked positions get weight exactly zero: `-inf` survives the additive
/// bias and max-subtraction, and `exp` underflows to `+0`.
pub fn scaled_dot_attention<T: Scalar>(
    g: &mut Graph<'_, T>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&Tensor<T>>,
) -> Result<(Var, Var)> {
    let (qn, d_k) = g.shape(q);
    let (kn, dk2) = g.shape(k);
    let (vn, _) = g.shape(v);
    if d_k != dk2 || kn != vn {
        return Err(Error::ShapeMismatch {
            op: "scaled_dot_attention",
            details: format!(
                "q {:?}, k {:?}, v {:?}",
                g.shape(q),
                g.shape(k),
                g.shape(v)
            ),
        });
    }
    let scores = g.matmul_t(q, k, false, true)?;
    let scaled = g.scale(scores, T::from_f64(1.0 / (d_k as f64).sqrt()));
    let biased = match mask {
        Some(m) => {
            if m.shape() != (qn, kn) {
                return Err(Error::ShapeMismatch {
                    op: "scaled_dot_attention",
                    details: format!("mask {:?} vs scores {:?}", m.shape(), (qn, kn)),
                });
            }
            let mc = g.constant(m.clone());
            g.add(scaled, mc)?
        }
        None => scaled,
    };
    let weights = g.softmax(biased)?;
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

/// Multi-head self/cross attention with learned Q/K/V/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: DenseLayer,
    pub wk: DenseLayer,
    pub wv: DenseLayer,
    pub wo: DenseLayer,
    pub n_heads: usize,
}

impl MultiHeadAttention {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &BlockConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !cfg.d_model.is_multiple_of(cfg.n_heads) {
            return Err(Error::InvalidConfig {
                violations: vec![format!(
                    "d_model = {} not divisible by n_heads = {}",
                    cfg.d_model, cfg.n_heads
                )],
            });
        }
        let d = cfg.d_model;
        Ok(MultiHeadAttention {
            wq: DenseLayer::init(store, &format!("{name}.wq"), d, d, rng),
            wk: DenseLayer::init(store, &format!("{name}.wk"), d, d, rng),
            wv: DenseLayer::init(store, &format!("{name}.wv"), d, d, rng),
            wo: DenseLayer::init(store, &format!("{name}.wo"), d, d, rng),
            n_heads: cfg.n_heads,
        })
    }

    /// Returns the projected output and per-head weight matrices.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x_q: Var,
        x_kv: Var,
        mask: Option<&Tensor<T>>,
    ) -> Result<(Var, Vec<Tensor<T>>)> {
        let d_model = self.wq.in_dim;
        if g.shape(x_q).1 != d_model || g.shape(x_kv).1 != d_model {
            return Err(Error::ShapeMismatch {
                op: "multi_head_attention",
                details: format!(
                    "feature dim must be {}, got q {:?} kv {:?}",
                    d_model,
                    g.shape(x_q),
                    g.shape(x_kv)
                ),
            });
        }
        let d_head = d_model / self.n_heads;
        let q = self.wq.forward(g, x_q)?;
        let k = self.wk.forward(g, x_kv)?;
        let v = self.wv.forward(g, x_kv)?;
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut records = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * d_head, d_head)?;
            let kh = g.slice_cols(k, h * d_head, d_head)?;
            let vh = g.slice_cols(v, h * d_head, d_head)?;
            let (out, weights) = scaled_dot_attention(g, qh, kh, vh, mask)?;
            records.push(g.value(weights).clone());
            heads.push(out);
        }
        let concat = g.concat_cols(&heads)?;
        let out = self.wo.forward(g, concat)?;
        Ok((out, records))
    }
}

/// Position-wise feed-forward: `dense(d_model→d_ff) → ReLU → dense(d_ff→d_model)`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: DenseLayer,
    pub lin2: DenseLayer,
}

impl FeedForward {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &BlockConfig,
        rng: &mut impl Rng,
    ) -> Self {
        FeedForward {
            lin1: DenseLayer::init(store, &format!("{name}.lin1"), cfg.d_model, cfg.d_ff, rng),
            lin2: DenseLayer::init(store, &format!("{name}.lin2"), cfg.d_ff, cfg.d_model, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.lin1.forward(g, x)?;
        let h = g.relu(h);
        self.lin2.forward(g, h)
    }
}

/// One post-norm residual block:
/// `x + dropout(MHA(x)) → LN → + dropout(FFN) → LN`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub mha: MultiHeadAttention,
    pub ffn: FeedForward,
    ln1_gain: crate::graph::ParamId,
    ln1_bias: crate::graph::ParamId,
    ln2_gain: crate::graph::ParamId,
    ln2_bias: crate::graph::ParamId,
    dropout: f64,
}

impl EncoderBlock {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &BlockConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = cfg.d_model;
        Ok(EncoderBlock {
            mha: MultiHeadAttention::init(store, &format!("{name}.mha"), cfg, rng)?,
            ffn: FeedForward::init(store, &format!("{name}.ffn"), cfg, rng),
            ln1_gain: store.add(format!("{name}.ln1.gain"), Tensor::filled(1, d, T::ONE)),
            ln1_bias: store.add(format!("{name}.ln1.bias"), Tensor::zeros(1, d)),
            ln2_gain: store.add(format!("{name}.ln2.gain"), Tensor::filled(1, d, T::ONE)),
            ln2_bias: store.add(format!("{name}.ln2.bias"), Tensor::zeros(1, d)),
            dropout: cfg.dropout,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        mask: Option<&Tensor<T>>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Var, Vec<Tensor<T>>)> {
        let (attn, weights) = self.mha.forward(g, x, x, mask)?;
        let attn = g.dropout(attn, self.dropout, training, rng)?;
        let res1 = g.add(x, attn)?;
        let g1 = g.param(self.ln1_gain);
        let b1 = g.param(self.ln1_bias);
        let normed1 = g.layer_norm(res1, g1, b1, T::from_f64(1e-5))?;

        let ff = self.ffn.forward(g, normed1)?;
        let ff = g.dropout(ff, self.dropout, training, rng)?;
        let res2 = g.add(normed1, ff)?;
        let g2 = g.param(self.ln2_gain);
        let b2 = g.param(self.ln2_bias);
        let normed2 = g.layer_norm(res2, g2, b2, T::from_f64(1e-5))?;
        Ok((normed2, weights))
    }
}

/// `n_blocks` residual blocks applied in sequence.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub blocks: Vec<EncoderBlock>,
}

impl TransformerStack {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &BlockConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let blocks = (0..cfg.n_blocks)
            .map(|i| EncoderBlock::init(store, &format!("{name}.block{}", i), cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformerStack { blocks })
    }

    /// Runs all blocks; attention weights are recorded for every layer.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        mask: Option<&Tensor<T>>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Var, AttentionRecord)> {
        let mut h = x;
        let mut record = AttentionRecord::default();
        for block in &self.blocks {
            let (out, weights) = block.forward(g, h, mask, training, rng)?;
            h = out;
            record.weights.push(
                weights
                    .iter()
                    .map(|t| {
                        (0..t.rows())
                            .map(|r| t.row(r).iter().map(|v| v.to_f64() as f32).collect())
                            .collect()
                    })
                    .collect(),
            );
        }
        Ok((h, record))
    }
}
