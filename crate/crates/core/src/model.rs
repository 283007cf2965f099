//! The layout VAE: attention encoder producing posterior parameters, the
//! reparameterized bottleneck, autoregressive and non-autoregressive
//! decoders, and fixed / learned priors.
//!
//! The encoder reads the continuous token sequence `[BOS, e_1..e_l, EOS]`.
//! In the autoregressive variant the first token's final hidden state
//! summarizes the layout and two dense heads emit one `(μ, log σ²)` pair;
//! the decoder then runs over `[z, BOS, e_1..e_l]` under a causal mask with
//! `z` prepended as a pseudo-token. The non-autoregressive variant keeps one
//! posterior pair per element and decodes all latent vectors in parallel
//! with unmasked self-attention.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{causal_mask, AttentionRecord, BlockConfig, TransformerStack};
use crate::error::{Error, Result};
use crate::graph::{Graph, ParamId, ParamStore, Var};
use crate::layout::{
    encode_input_token, encode_output_token, sentinel_input_token, sentinel_output_token,
    GridConfig, Layout, LengthDistribution,
};
use crate::nn::DenseLayer;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderVariant {
    Ar,
    NonAr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Fixed,
    Learned,
}

/// Everything needed to rebuild a model skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: DecoderVariant,
    pub prior: PriorKind,
    pub grid: GridConfig,
    pub block: BlockConfig,
    pub d_z: usize,
    pub max_elements: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: DecoderVariant::Ar,
            prior: PriorKind::Fixed,
            grid: GridConfig::default(),
            block: BlockConfig::default(),
            d_z: 512,
            max_elements: 100,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if let Err(Error::InvalidConfig { violations: v }) = self.block.validate() {
            violations.extend(v);
        }
        if let Err(Error::InvalidConfig { violations: v }) =
            GridConfig::new(self.grid.h, self.grid.w, self.grid.c).map(|_| ())
        {
            violations.extend(v);
        }
        if self.d_z == 0 {
            violations.push("d_z must be positive".into());
        }
        if self.max_elements == 0 {
            violations.push("max_elements must be positive".into());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }
}

/// Posterior parameters: one row for the aggregated (AR) case, one row per
/// element otherwise. `logvar` holds `log σ²`.
#[derive(Debug, Clone, Copy)]
pub struct Posterior {
    pub mu: Var,
    pub logvar: Var,
    pub aggregated: bool,
}

/// Per-segment logits: `[class | x | y | w | h]`, one row per prediction.
#[derive(Debug, Clone, Copy)]
pub struct LogitBlocks {
    pub class: Var,
    pub x: Var,
    pub y: Var,
    pub w: Var,
    pub h: Var,
}

/// LSTM that unrolls a deterministic sequence of diagonal Gaussians; used as
/// the learned prior `p(z|s)`.
#[derive(Debug, Clone)]
pub struct RecurrentPrior {
    tick: ParamId,
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
    h0: ParamId,
    c0: ParamId,
    mu_head: DenseLayer,
    logvar_head: DenseLayer,
    hidden: usize,
}

impl RecurrentPrior {
    fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        hidden: usize,
        d_z: usize,
        rng: &mut impl Rng,
    ) -> Self {
        RecurrentPrior {
            tick: store.add(format!("{name}.tick"), crate::nn::glorot_uniform(1, hidden, rng)),
            w_ih: store.add(
                format!("{name}.w_ih"),
                crate::nn::glorot_uniform(hidden, 4 * hidden, rng),
            ),
            w_hh: store.add(
                format!("{name}.w_hh"),
                crate::nn::glorot_uniform(hidden, 4 * hidden, rng),
            ),
            b: store.add(format!("{name}.b"), Tensor::zeros(1, 4 * hidden)),
            h0: store.add(format!("{name}.h0"), Tensor::zeros(1, hidden)),
            c0: store.add(format!("{name}.c0"), Tensor::zeros(1, hidden)),
            mu_head: DenseLayer::init(store, &format!("{name}.mu"), hidden, d_z, rng),
            logvar_head: DenseLayer::init(store, &format!("{name}.logvar"), hidden, d_z, rng),
            hidden,
        }
    }

    /// Unroll `s` steps; returns `(μ, log σ²)` each `[s, d_z]`.
    fn rollout<T: Scalar>(&self, g: &mut Graph<'_, T>, s: usize) -> Result<(Var, Var)> {
        let hsz = self.hidden;
        let tick = g.param(self.tick);
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b = g.param(self.b);
        let mut h = g.param(self.h0);
        let mut c = g.param(self.c0);
        let drive = g.matmul(tick, w_ih)?;
        let mut mus = Vec::with_capacity(s);
        let mut logvars = Vec::with_capacity(s);
        for _ in 0..s {
            let rec = g.matmul(h, w_hh)?;
            let gates = g.add(drive, rec)?;
            let gates = g.add_bias_row(gates, b)?;
            let i_g = g.slice_cols(gates, 0, hsz)?;
            let f_g = g.slice_cols(gates, hsz, hsz)?;
            let g_g = g.slice_cols(gates, 2 * hsz, hsz)?;
            let o_g = g.slice_cols(gates, 3 * hsz, hsz)?;
            let i_g = g.sigmoid(i_g);
            let f_g = g.sigmoid(f_g);
            let g_g = g.tanh(g_g);
            let o_g = g.sigmoid(o_g);
            let fc = g.mul(f_g, c)?;
            let ig = g.mul(i_g, g_g)?;
            c = g.add(fc, ig)?;
            let ct = g.tanh(c);
            h = g.mul(o_g, ct)?;
            mus.push(self.mu_head.forward(g, h)?);
            logvars.push(self.logvar_head.forward(g, h)?);
        }
        Ok((g.concat_rows(&mus)?, g.concat_rows(&logvars)?))
    }
}

/// The full VAE. Parameters live in one named store so checkpoints are a
/// flat list of tensors.
pub struct LayoutVae<T: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    input_proj: DenseLayer,
    encoder: TransformerStack,
    mu_head: DenseLayer,
    logvar_head: DenseLayer,
    z_proj: DenseLayer,
    token_embed: Option<DenseLayer>,
    decoder: TransformerStack,
    head_class: DenseLayer,
    head_x: DenseLayer,
    head_y: DenseLayer,
    head_w: DenseLayer,
    head_h: DenseLayer,
    prior: Option<RecurrentPrior>,
}

impl<T: Scalar> LayoutVae<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.block.d_model;
        let grid = &config.grid;
        let input_proj =
            DenseLayer::init(&mut store, "input_proj", grid.continuous_len(), d, &mut rng);
        let encoder = TransformerStack::init(&mut store, "encoder", &config.block, &mut rng)?;
        let mu_head = DenseLayer::init(&mut store, "mu_head", d, config.d_z, &mut rng);
        let logvar_head = DenseLayer::init(&mut store, "logvar_head", d, config.d_z, &mut rng);
        let z_proj = DenseLayer::init(&mut store, "z_proj", config.d_z, d, &mut rng);
        let token_embed = match config.variant {
            DecoderVariant::Ar => Some(DenseLayer::init(
                &mut store,
                "token_embed",
                grid.discrete_len(),
                d,
                &mut rng,
            )),
            DecoderVariant::NonAr => None,
        };
        let decoder = TransformerStack::init(&mut store, "decoder", &config.block, &mut rng)?;
        let sizes = grid.block_sizes();
        let head_class = DenseLayer::init(&mut store, "head_class", d, sizes[0], &mut rng);
        let head_x = DenseLayer::init(&mut store, "head_x", d, sizes[1], &mut rng);
        let head_y = DenseLayer::init(&mut store, "head_y", d, sizes[2], &mut rng);
        let head_w = DenseLayer::init(&mut store, "head_w", d, sizes[3], &mut rng);
        let head_h = DenseLayer::init(&mut store, "head_h", d, sizes[4], &mut rng);
        let prior = match config.prior {
            PriorKind::Learned => Some(RecurrentPrior::init(
                &mut store,
                "prior",
                config.d_z.min(128),
                config.d_z,
                &mut rng,
            )),
            PriorKind::Fixed => None,
        };
        Ok(LayoutVae {
            config,
            store,
            input_proj,
            encoder,
            mu_head,
            logvar_head,
            z_proj,
            token_embed,
            decoder,
            head_class,
            head_x,
            head_y,
            head_w,
            head_h,
            prior,
        })
    }

    /// Continuous encoder input `[BOS, e_1..e_l, EOS]`.
    pub fn encoder_input(&self, layout: &Layout) -> Result<Tensor<T>> {
        let grid = &self.config.grid;
        let mut rows = Vec::with_capacity(layout.len() + 2);
        rows.push(sentinel_input_token(grid, false));
        for e in &layout.elements {
            rows.push(encode_input_token(e, grid)?);
        }
        rows.push(sentinel_input_token(grid, true));
        let rows: Vec<Vec<T>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| T::from_f64(v as f64)).collect())
            .collect();
        Tensor::from_rows(&rows)
    }

    /// Discrete decoder input `[BOS, e_1..e_l]` (teacher forcing).
    pub fn decoder_input(&self, layout: &Layout) -> Result<Tensor<T>> {
        let grid = &self.config.grid;
        let mut rows = Vec::with_capacity(layout.len() + 1);
        rows.push(sentinel_output_token(grid, false));
        for e in &layout.elements {
            rows.push(encode_output_token(e, grid)?);
        }
        let rows: Vec<Vec<T>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| T::from_f64(v as f64)).collect())
            .collect();
        Tensor::from_rows(&rows)
    }

    /// Run the encoder; returns posterior parameters and attention maps.
    pub fn encode(
        &self,
        g: &mut Graph<'_, T>,
        enc_input: &Tensor<T>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Posterior, AttentionRecord)> {
        let n = enc_input.rows();
        if n == 0 {
            return Err(Error::Model("encode: empty sequence".into()));
        }
        if enc_input.cols() != self.config.grid.continuous_len() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                details: format!(
                    "token width {} != {}",
                    enc_input.cols(),
                    self.config.grid.continuous_len()
                ),
            });
        }
        if enc_input.get(0, self.config.grid.bos_class()).to_f64() != 1.0 {
            return Err(Error::Model("encode: sequence must start with BOS".into()));
        }
        let x = g.constant(enc_input.clone());
        let x = self.input_proj.forward(g, x)?;
        let (hidden, record) = self.encoder.forward(g, x, None, training, rng)?;
        match self.config.variant {
            DecoderVariant::Ar => {
                let h0 = g.slice_rows(hidden, 0, 1)?;
                Ok((
                    Posterior {
                        mu: self.mu_head.forward(g, h0)?,
                        logvar: self.logvar_head.forward(g, h0)?,
                        aggregated: true,
                    },
                    record,
                ))
            }
            DecoderVariant::NonAr => {
                let l = n.saturating_sub(2);
                if l == 0 {
                    return Err(Error::Model(
                        "encode: non-autoregressive variant needs at least one element".into(),
                    ));
                }
                let h = g.slice_rows(hidden, 1, l)?;
                Ok((
                    Posterior {
                        mu: self.mu_head.forward(g, h)?,
                        logvar: self.logvar_head.forward(g, h)?,
                        aggregated: false,
                    },
                    record,
                ))
            }
        }
    }

    fn output_heads(&self, g: &mut Graph<'_, T>, hidden: Var) -> Result<LogitBlocks> {
        Ok(LogitBlocks {
            class: self.head_class.forward(g, hidden)?,
            x: self.head_x.forward(g, hidden)?,
            y: self.head_y.forward(g, hidden)?,
            w: self.head_w.forward(g, hidden)?,
            h: self.head_h.forward(g, hidden)?,
        })
    }

    /// Autoregressive decode over `[z ; tokens]` with a causal mask.
    ///
    /// `tokens` is `[BOS, e_1..e_m]` in discrete form; logits come back for
    /// every prediction position (one per token row), so the last row is the
    /// next-element distribution during generation.
    pub fn decode_ar(
        &self,
        g: &mut Graph<'_, T>,
        z: Var,
        tokens: &Tensor<T>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(LogitBlocks, AttentionRecord)> {
        let embed = self
            .token_embed
            .as_ref()
            .ok_or_else(|| Error::Model("decode_ar on a non-autoregressive model".into()))?;
        let m = tokens.rows();
        if m == 0 {
            return Err(Error::Model("decode_ar: token sequence is empty".into()));
        }
        if m > self.config.max_elements + 1 {
            return Err(Error::Model(format!(
                "decode_ar: sequence of {} tokens exceeds max length {}",
                m,
                self.config.max_elements + 1
            )));
        }
        if g.shape(z) != (1, self.config.d_z) {
            return Err(Error::ShapeMismatch {
                op: "decode_ar",
                details: format!("z must be 1x{}, got {:?}", self.config.d_z, g.shape(z)),
            });
        }
        let toks = g.constant(tokens.clone());
        let embedded = embed.forward(g, toks)?;
        let z_tok = self.z_proj.forward(g, z)?;
        let seq = g.concat_rows(&[z_tok, embedded])?;
        let mask = causal_mask::<T>(m + 1);
        let (hidden, record) = self.decoder.forward(g, seq, Some(&mask), training, rng)?;
        // Row 0 is the z pseudo-token; predictions start at the BOS row.
        let pred = g.slice_rows(hidden, 1, m)?;
        Ok((self.output_heads(g, pred)?, record))
    }

    /// One autoregressive step: logits for the next element given `z` and
    /// the partial token sequence `[BOS, e_1..e_t]` (the last prediction row
    /// of [`LayoutVae::decode_ar`]).
    pub fn decode_ar_step(
        &self,
        g: &mut Graph<'_, T>,
        z: Var,
        partial_tokens: &Tensor<T>,
        rng: &mut impl Rng,
    ) -> Result<LogitBlocks> {
        let (blocks, _) = self.decode_ar(g, z, partial_tokens, false, rng)?;
        let last = g.shape(blocks.class).0 - 1;
        Ok(LogitBlocks {
            class: g.slice_rows(blocks.class, last, 1)?,
            x: g.slice_rows(blocks.x, last, 1)?,
            y: g.slice_rows(blocks.y, last, 1)?,
            w: g.slice_rows(blocks.w, last, 1)?,
            h: g.slice_rows(blocks.h, last, 1)?,
        })
    }

    /// Non-autoregressive decode: one latent row per element, full
    /// self-attention, all logits emitted in parallel.
    pub fn decode_nonar(
        &self,
        g: &mut Graph<'_, T>,
        z_set: Var,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(LogitBlocks, AttentionRecord)> {
        if self.config.variant != DecoderVariant::NonAr {
            return Err(Error::Model("decode_nonar on an autoregressive model".into()));
        }
        let (l, dz) = g.shape(z_set);
        if l == 0 {
            return Err(Error::Model("decode_nonar: needs at least one latent".into()));
        }
        if dz != self.config.d_z {
            return Err(Error::ShapeMismatch {
                op: "decode_nonar",
                details: format!("latents are {}-d, expected {}", dz, self.config.d_z),
            });
        }
        let x = self.z_proj.forward(g, z_set)?;
        let (hidden, record) = self.decoder.forward(g, x, None, training, rng)?;
        Ok((self.output_heads(g, hidden)?, record))
    }

    /// Learned-prior parameters for a length-`s` layout.
    pub fn learned_prior_params(&self, g: &mut Graph<'_, T>, s: usize) -> Result<(Var, Var)> {
        let prior = self.prior.as_ref().ok_or_else(|| {
            Error::Model("learned_prior_params: model uses the fixed prior".into())
        })?;
        if s == 0 || s > self.config.max_elements {
            return Err(Error::Model(format!(
                "learned_prior_params: length {} outside 1..={}",
                s, self.config.max_elements
            )));
        }
        prior.rollout(g, s)
    }

    pub fn has_learned_prior(&self) -> bool {
        self.prior.is_some()
    }
}

/// `z = μ + σ ⊙ ε` with `σ = exp(½ log σ²)`; deterministic given `ε`.
pub fn reparameterize<T: Scalar>(
    g: &mut Graph<'_, T>,
    post: &Posterior,
    eps: &Tensor<T>,
) -> Result<Var> {
    if g.shape(post.mu) != eps.shape() {
        return Err(Error::ShapeMismatch {
            op: "reparameterize",
            details: format!("eps {:?} vs mu {:?}", eps.shape(), g.shape(post.mu)),
        });
    }
    let half_logvar = g.scale(post.logvar, T::from_f64(0.5));
    let sigma = g.exp(half_logvar);
    let e = g.constant(eps.clone());
    let noise = g.mul(sigma, e)?;
    g.add(post.mu, noise)
}

/// KL(q ‖ N(0, I)) summed over all dimensions:
/// `½ Σ (μ² + σ² − 1 − log σ²)`.
pub fn kl_to_standard_normal<T: Scalar>(g: &mut Graph<'_, T>, post: &Posterior) -> Result<Var> {
    let mu2 = g.mul(post.mu, post.mu)?;
    let var = g.exp(post.logvar);
    let a = g.add(mu2, var)?;
    let b = g.sub(a, post.logvar)?;
    let c = g.add_scalar(b, T::from_f64(-1.0));
    let s = g.sum(c);
    Ok(g.scale(s, T::from_f64(0.5)))
}

/// KL(q ‖ p) for diagonal Gaussians with prior parameters given as graph
/// nodes (so the learned prior trains through this term):
/// `½ Σ (log σ_p² − log σ_q² + (σ_q² + (μ_q − μ_p)²)/σ_p² − 1)`.
pub fn kl_to_gaussian<T: Scalar>(
    g: &mut Graph<'_, T>,
    post: &Posterior,
    prior_mu: Var,
    prior_logvar: Var,
) -> Result<Var> {
    if g.shape(post.mu) != g.shape(prior_mu) {
        return Err(Error::ShapeMismatch {
            op: "kl_to_gaussian",
            details: format!("{:?} vs {:?}", g.shape(post.mu), g.shape(prior_mu)),
        });
    }
    let log_ratio = g.sub(prior_logvar, post.logvar)?;
    let var_q = g.exp(post.logvar);
    let d_mu = g.sub(post.mu, prior_mu)?;
    let d_mu2 = g.mul(d_mu, d_mu)?;
    let num = g.add(var_q, d_mu2)?;
    let neg_prior_logvar = g.scale(prior_logvar, T::from_f64(-1.0));
    let inv_var_p = g.exp(neg_prior_logvar);
    let frac = g.mul(num, inv_var_p)?;
    let a = g.add(log_ratio, frac)?;
    let b = g.add_scalar(a, T::from_f64(-1.0));
    let s = g.sum(b);
    Ok(g.scale(s, T::from_f64(0.5)))
}

/// Closed-form KL between diagonal Gaussians (plain math, no graph).
pub fn kl_diag_gaussians(mu_q: &[f64], var_q: &[f64], mu_p: &[f64], var_p: &[f64]) -> f64 {
    assert_eq!(mu_q.len(), var_q.len());
    assert_eq!(mu_q.len(), mu_p.len());
    assert_eq!(mu_q.len(), var_p.len());
    let mut acc = 0.0;
    for i in 0..mu_q.len() {
        let d = mu_q[i] - mu_p[i];
        acc += (var_p[i] / var_q[i]).ln() + (var_q[i] + d * d) / var_p[i] - 1.0;
    }
    0.5 * acc
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned header + flat list of named tensors.
// ---------------------------------------------------------------------------

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: (usize, usize),
    values: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    length_dist: Option<LengthDistribution>,
    params: Vec<ParamRecord>,
}

/// Serialize a model (plus the empirical length distribution for
/// non-autoregressive sampling) to a single JSON file.
pub fn save_checkpoint(
    model: &LayoutVae<f32>,
    length_dist: Option<&LengthDistribution>,
    path: &Path,
) -> Result<()> {
    let params = model
        .store
        .iter()
        .map(|(_, name, t)| ParamRecord {
            name: name.to_string(),
            shape: t.shape(),
            values: t.data().to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        length_dist: length_dist.cloned(),
        params,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let json = serde_json::to_string(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Rebuild a model from a checkpoint; every stored tensor must match a
/// parameter by name and shape.
pub fn load_checkpoint(path: &Path) -> Result<(LayoutVae<f32>, Option<LengthDistribution>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {}", path.display(), e)))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {}", e)))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {})",
            file.version, CHECKPOINT_VERSION
        )));
    }
    let mut model = LayoutVae::<f32>::new(file.config, 0)?;
    let mut loaded = 0usize;
    for record in &file.params {
        let mut found = false;
        for id in model.store.ids().collect::<Vec<_>>() {
            if model.store.name(id) == record.name {
                let slot = model.store.get_mut(id);
                if slot.shape() != record.shape {
                    return Err(Error::Checkpoint(format!(
                        "parameter {} has shape {:?}, checkpoint has {:?}",
                        record.name,
                        slot.shape(),
                        record.shape
                    )));
                }
                *slot = Tensor::from_vec(record.shape.0, record.shape.1, record.values.clone())?;
                found = true;
                loaded += 1;
                break;
            }
        }
        if !found {
            return Err(Error::Checkpoint(format!(
                "checkpoint parameter {} does not exist in the model",
                record.name
            )));
        }
    }
    if loaded != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint provides {} of {} parameters",
            loaded,
            model.store.len()
        )));
    }
    Ok((model, file.length_dist))
}
