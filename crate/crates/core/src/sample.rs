//! Layout generation from the prior, latent interpolation, latent-set
//! editing for the non-autoregressive decoder, and attention-map export.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionRecord;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::{
    element_from_bins, sentinel_output_token, Element, Layout, LengthDistribution,
};
use crate::model::{reparameterize, DecoderVariant, LayoutVae};
use crate::tensor::Tensor;

/// Per-block decoding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    Categorical,
    TopK { k: usize },
    Nucleus { p: f64 },
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    /// `greedy`, `categorical`, `top-k:<K>`, `nucleus:<P>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "greedy" {
            return Ok(Strategy::Greedy);
        }
        if lower == "categorical" {
            return Ok(Strategy::Categorical);
        }
        if let Some(k) = lower.strip_prefix("top-k:") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad top-k count in {:?}", s)))?;
            return Ok(Strategy::TopK { k });
        }
        if let Some(p) = lower.strip_prefix("nucleus:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad nucleus p in {:?}", s)))?;
            return Ok(Strategy::Nucleus { p });
        }
        Err(Error::InvalidArgument(format!(
            "unknown strategy {:?} (greedy | categorical | top-k:<K> | nucleus:<P>)",
            s
        )))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub max_len: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Page size stamped on generated layouts (rendering only).
    pub page: (u32, u32),
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            strategy: Strategy::Categorical,
            max_len: 100,
            temperature: 1.0,
            seed: 0,
            page: (850, 1100),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self, model_max: usize) -> Result<()> {
        let mut violations = Vec::new();
        if self.max_len == 0 || self.max_len > model_max {
            violations.push(format!(
                "sampling.max_len = {} outside 1..={}",
                self.max_len, model_max
            ));
        }
        if self.temperature <= 0.0 {
            violations.push(format!(
                "sampling.temperature = {} (need > 0)",
                self.temperature
            ));
        }
        match self.strategy {
            Strategy::TopK { k: 0 } => violations.push("sampling.top-k needs k >= 1".into()),
            Strategy::Nucleus { p } if !(p > 0.0 && p <= 1.0) => {
                violations.push(format!("sampling.nucleus p = {} outside (0, 1]", p))
            }
            _ => {}
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }
}

/// Independent RNG stream for one sampler.
pub fn sampler_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pick an index from a logit row under the configured strategy.
/// `masked` indices are excluded outright.
fn sample_index(
    logits: &[f32],
    masked: &[usize],
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> usize {
    let mut work: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| !masked.contains(i))
        .map(|(i, &v)| (i, v as f64 / cfg.temperature))
        .collect();
    debug_assert!(!work.is_empty());
    if let Strategy::Greedy = cfg.strategy {
        return work
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(i, _)| *i)
            .unwrap();
    }
    // softmax over the kept entries
    let max = work.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (_, v) in work.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for (_, v) in work.iter_mut() {
        *v /= sum;
    }
    match cfg.strategy {
        Strategy::Greedy => unreachable!(),
        Strategy::Categorical => {}
        Strategy::TopK { k } => {
            work.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            work.truncate(k.max(1));
            let total: f64 = work.iter().map(|(_, p)| p).sum();
            for (_, p) in work.iter_mut() {
                *p /= total;
            }
        }
        Strategy::Nucleus { p } => {
            work.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let mut cum = 0.0;
            let mut keep = 0;
            for (i, (_, prob)) in work.iter().enumerate() {
                cum += prob;
                keep = i + 1;
                if cum >= p {
                    break;
                }
            }
            work.truncate(keep.max(1));
            let total: f64 = work.iter().map(|(_, q)| q).sum();
            for (_, q) in work.iter_mut() {
                *q /= total;
            }
        }
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in &work {
        acc += p;
        if u < acc {
            return *i;
        }
    }
    work.last().map(|(i, _)| *i).unwrap()
}

/// `rows × cols` tensor of standard-normal draws.
pub fn standard_normal_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<f32> {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let v: f64 = rng.sample(rand_distr::StandardNormal);
                v as f32
            })
            .collect(),
    )
    .expect("sized data")
}

/// Draw `z` from the model's prior: `N(0, I)` or the learned first-step
/// Gaussian for the aggregated autoregressive latent.
pub fn draw_ar_latent(model: &LayoutVae<f32>, rng: &mut impl Rng) -> Result<Tensor<f32>> {
    let d_z = model.config.d_z;
    let eps = standard_normal_tensor(1, d_z, rng);
    if !model.has_learned_prior() {
        return Ok(eps);
    }
    let mut g = Graph::new(&model.store);
    let (mu, logvar) = model.learned_prior_params(&mut g, 1)?;
    let mu = g.value(mu).clone();
    let logvar = g.value(logvar).clone();
    let mut z = mu;
    for i in 0..d_z {
        let sigma = (logvar.data()[i] * 0.5).exp();
        z.data_mut()[i] += sigma * eps.data()[i];
    }
    Ok(z)
}

/// Autoregressive generation with a caller-supplied latent. Decodes from BOS,
/// sampling all five blocks per step, until the EOS class or `max_len`.
/// Returns the layout and whether it was truncated at `max_len`.
pub fn sample_ar_with_z(
    model: &LayoutVae<f32>,
    z: &Tensor<f32>,
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> Result<(Layout, bool)> {
    if model.config.variant != DecoderVariant::Ar {
        return Err(Error::Model("sample_ar on a non-autoregressive checkpoint".into()));
    }
    cfg.validate(model.config.max_elements)?;
    let grid = model.config.grid;
    let mut token_rows: Vec<Vec<f32>> = vec![sentinel_output_token(&grid, false)];
    let mut elements: Vec<Element> = Vec::new();
    let bos = grid.bos_class();
    let eos = grid.eos_class();
    let mut truncated = true;
    let mut step_rng = rng;
    for _ in 0..cfg.max_len {
        let tokens = Tensor::from_rows(&token_rows)?;
        let mut g = Graph::new(&model.store);
        let zv = g.constant(z.clone());
        let (blocks, _) = model.decode_ar(&mut g, zv, &tokens, false, &mut step_rng)?;
        let last = g.shape(blocks.class).0 - 1;
        // BOS can never be emitted; EOS terminates.
        let class = sample_index(g.value(blocks.class).row(last), &[bos], cfg, &mut step_rng);
        if class == eos {
            truncated = false;
            break;
        }
        let xi = sample_index(g.value(blocks.x).row(last), &[], cfg, &mut step_rng);
        let yi = sample_index(g.value(blocks.y).row(last), &[], cfg, &mut step_rng);
        let wi = sample_index(g.value(blocks.w).row(last), &[], cfg, &mut step_rng);
        let hi = sample_index(g.value(blocks.h).row(last), &[], cfg, &mut step_rng);
        let element = element_from_bins(class, xi, yi, wi, hi, &grid)?;
        elements.push(element);
        token_rows.push(crate::layout::encode_output_token(&element, &grid)?);
    }
    Ok((Layout::new(cfg.page, elements), truncated))
}

/// Autoregressive generation from the prior.
pub fn sample_ar(
    model: &LayoutVae<f32>,
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> Result<Layout> {
    let z = draw_ar_latent(model, rng)?;
    let (layout, _) = sample_ar_with_z(model, &z, cfg, rng)?;
    Ok(layout)
}

/// Decode a caller-supplied latent set in parallel (non-autoregressive).
/// The class block is restricted to real classes.
pub fn sample_nonar_with_latents(
    model: &LayoutVae<f32>,
    z_set: &Tensor<f32>,
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> Result<Layout> {
    if model.config.variant != DecoderVariant::NonAr {
        return Err(Error::Model("sample_nonar on an autoregressive checkpoint".into()));
    }
    cfg.validate(model.config.max_elements)?;
    let grid = model.config.grid;
    let mut g = Graph::new(&model.store);
    let zv = g.constant(z_set.clone());
    let (blocks, _) = model.decode_nonar(&mut g, zv, false, rng)?;
    let masked = [grid.bos_class(), grid.eos_class()];
    let mut elements = Vec::with_capacity(z_set.rows());
    for r in 0..z_set.rows() {
        let class = sample_index(g.value(blocks.class).row(r), &masked, cfg, rng);
        let xi = sample_index(g.value(blocks.x).row(r), &[], cfg, rng);
        let yi = sample_index(g.value(blocks.y).row(r), &[], cfg, rng);
        let wi = sample_index(g.value(blocks.w).row(r), &[], cfg, rng);
        let hi = sample_index(g.value(blocks.h).row(r), &[], cfg, rng);
        elements.push(element_from_bins(class, xi, yi, wi, hi, &grid)?);
    }
    Ok(Layout::new(cfg.page, elements))
}

/// Non-autoregressive generation: draw `s ~ p(s)`, then `s` latents from the
/// fixed or learned prior, and decode them in parallel.
pub fn sample_nonar(
    model: &LayoutVae<f32>,
    length_dist: &LengthDistribution,
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> Result<Layout> {
    if length_dist.probs().iter().all(|&p| p == 0.0) {
        return Err(Error::Model("length distribution has empty support".into()));
    }
    let s = length_dist.sample(rng).min(cfg.max_len.max(1));
    let d_z = model.config.d_z;
    let eps = standard_normal_tensor(s, d_z, rng);
    let z_set = if model.has_learned_prior() {
        let mut g = Graph::new(&model.store);
        let (mu, logvar) = model.learned_prior_params(&mut g, s)?;
        let mu = g.value(mu).clone();
        let logvar = g.value(logvar).clone();
        let mut z = mu;
        for i in 0..z.len() {
            let sigma = (logvar.data()[i] * 0.5).exp();
            z.data_mut()[i] += sigma * eps.data()[i];
        }
        z
    } else {
        eps
    };
    sample_nonar_with_latents(model, &z_set, cfg, rng)
}

/// Linear blend `z1 + λ·(z2 − z1)`.
pub fn interpolate(z1: &Tensor<f32>, z2: &Tensor<f32>, lambda: f64) -> Result<Tensor<f32>> {
    if z1.shape() != z2.shape() {
        return Err(Error::ShapeMismatch {
            op: "interpolate",
            details: format!("{:?} vs {:?}", z1.shape(), z2.shape()),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "interpolate: lambda {} outside [0, 1]",
            lambda
        )));
    }
    let l = lambda as f32;
    let data = z1
        .data()
        .iter()
        .zip(z2.data())
        .map(|(&a, &b)| a + l * (b - a))
        .collect();
    Tensor::from_vec(z1.rows(), z1.cols(), data)
}

/// Edit operations on a non-autoregressive latent set.
#[derive(Debug, Clone)]
pub enum LatentEdit {
    Remove(usize),
    Insert(usize, Vec<f32>),
}

/// Remove or insert one latent vector; decoding the result yields one fewer
/// or one more element.
pub fn edit_latents(z_set: &Tensor<f32>, edit: &LatentEdit) -> Result<Tensor<f32>> {
    let (l, d) = z_set.shape();
    match edit {
        LatentEdit::Remove(i) => {
            if *i >= l {
                return Err(Error::InvalidArgument(format!(
                    "remove index {} out of bounds for {} latents",
                    i, l
                )));
            }
            if l == 1 {
                return Err(Error::InvalidArgument(
                    "removing the only latent vector would leave an empty set".into(),
                ));
            }
            let mut rows = Vec::with_capacity(l - 1);
            for r in 0..l {
                if r != *i {
                    rows.push(z_set.row(r).to_vec());
                }
            }
            Tensor::from_rows(&rows)
        }
        LatentEdit::Insert(i, row) => {
            if *i > l {
                return Err(Error::InvalidArgument(format!(
                    "insert index {} out of bounds for {} latents",
                    i, l
                )));
            }
            if row.len() != d {
                return Err(Error::ShapeMismatch {
                    op: "edit_latents",
                    details: format!("new vector has {} dims, set has {}", row.len(), d),
                });
            }
            let mut rows = Vec::with_capacity(l + 1);
            for r in 0..*i {
                rows.push(z_set.row(r).to_vec());
            }
            rows.push(row.clone());
            for r in *i..l {
                rows.push(z_set.row(r).to_vec());
            }
            Tensor::from_rows(&rows)
        }
    }
}

/// Encoder and decoder attention maps for one layout, one matrix per
/// layer/head. The decoder runs teacher-forced under its causal mask, so row
/// `t` of each decoder matrix is the attention at autoregressive step `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionExport {
    pub encoder: AttentionRecord,
    pub decoder: AttentionRecord,
}

pub fn export_attention(model: &LayoutVae<f32>, layout: &Layout) -> Result<AttentionExport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new(&model.store);
    let enc_input = model.encoder_input(layout)?;
    let (post, encoder_record) = model.encode(&mut g, &enc_input, false, &mut rng)?;
    let (rows, cols) = g.shape(post.mu);
    let z = reparameterize(&mut g, &post, &Tensor::zeros(rows, cols))?;
    let decoder_record = match model.config.variant {
        DecoderVariant::Ar => {
            let dec_input = model.decoder_input(layout)?;
            let (_, record) = model.decode_ar(&mut g, z, &dec_input, false, &mut rng)?;
            record
        }
        DecoderVariant::NonAr => {
            let (_, record) = model.decode_nonar(&mut g, z, false, &mut rng)?;
            record
        }
    };
    Ok(AttentionExport {
        encoder: encoder_record,
        decoder: decoder_record,
    })
}

/// Largest attention weight at a masked (future) position, across all
/// decoder layers and heads. Zero for a correctly masked decoder.
pub fn max_masked_weight(record: &AttentionRecord) -> f64 {
    let mut worst = 0.0f64;
    for layer in &record.weights {
        for head in layer {
            for (q, row) in head.iter().enumerate() {
                for (k, &w) in row.iter().enumerate() {
                    if k > q {
                        worst = worst.max(w as f64);
                    }
                }
            }
        }
    }
    worst
}
