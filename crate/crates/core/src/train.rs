//! Training: the β-VAE objective with sigmoid β warm-up, the inverse-sqrt
//! learning-rate schedule, per-segment reconstruction loss, and the
//! teacher-forced loop for both decoder variants.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::{
    encode_output_token, sentinel_output_token, GridConfig, Layout, LengthDistribution,
};
use crate::model::{
    kl_to_gaussian, kl_to_standard_normal, reparameterize, save_checkpoint, DecoderVariant,
    LayoutVae, LogitBlocks,
};
use crate::nn::{clip_global_norm, AdamState};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// `None` resolves per variant: 30 autoregressive, 50 non-autoregressive.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    /// `None` resolves per variant: 1.0 autoregressive, 0.5 non-autoregressive.
    pub beta_target: Option<f64>,
    pub schedule_k: f64,
    pub schedule_b: f64,
    pub warmup_steps: u64,
    pub grad_clip: f64,
    pub seed: u64,
    /// Hard cap on optimizer steps (handy for desk-scale runs).
    pub max_steps: Option<u64>,
    /// Stop once teacher-forced accuracy reaches this value
    /// (checked every `accuracy_check_every` steps).
    pub stop_at_accuracy: Option<f64>,
    pub accuracy_check_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: None,
            batch_size: 64,
            beta_target: None,
            schedule_k: 0.0025,
            schedule_b: 6.25,
            warmup_steps: 4000,
            grad_clip: 1.0,
            seed: 0,
            max_steps: None,
            stop_at_accuracy: None,
            accuracy_check_every: 200,
        }
    }
}

impl TrainConfig {
    pub fn resolved_beta_target(&self, variant: DecoderVariant) -> f64 {
        self.beta_target.unwrap_or(match variant {
            DecoderVariant::Ar => 1.0,
            DecoderVariant::NonAr => 0.5,
        })
    }

    pub fn resolved_epochs(&self, variant: DecoderVariant) -> usize {
        self.epochs.unwrap_or(match variant {
            DecoderVariant::Ar => 30,
            DecoderVariant::NonAr => 50,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.batch_size == 0 {
            violations.push("train.batch_size must be >= 1".into());
        }
        if let Some(b) = self.beta_target {
            if b <= 0.0 {
                violations.push(format!("train.beta_target = {} (need > 0)", b));
            }
        }
        if self.warmup_steps == 0 {
            violations.push("train.warmup_steps must be >= 1".into());
        }
        if self.grad_clip <= 0.0 {
            violations.push(format!("train.grad_clip = {} (need > 0)", self.grad_clip));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }
}

/// β warm-up: `β(i) = β_target / (1 + e^(−k·i + b))`, monotone in the
/// iteration count `i` (optimizer steps) and saturating at `β_target`.
pub fn beta_at(i: u64, beta_target: f64, k: f64, b: f64) -> f64 {
    beta_target / (1.0 + (-(k * i as f64) + b).exp())
}

/// Inverse-square-root schedule with linear warm-up:
/// `d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)`; peaks at
/// `step == warmup`.
pub fn lr_at(step: u64, d_model: usize, warmup: u64) -> Result<f64> {
    if step == 0 {
        return Err(Error::InvalidArgument("lr_at: step must be >= 1".into()));
    }
    let s = step as f64;
    let w = warmup as f64;
    Ok((d_model as f64).powf(-0.5) * (s.powf(-0.5)).min(s * w.powf(-1.5)))
}

/// Per-segment one-hot targets for one layout.
///
/// `class` has one row per prediction; the coordinate blocks cover only the
/// real elements (the EOS row, present in the autoregressive case, has no
/// coordinate targets).
pub struct TargetBlocks<T> {
    pub class: Tensor<T>,
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    pub w: Tensor<T>,
    pub h: Tensor<T>,
}

impl<T: Scalar> TargetBlocks<T> {
    pub fn n_positions(&self) -> usize {
        self.class.rows()
    }

    pub fn n_coord_rows(&self) -> usize {
        self.x.rows()
    }
}

/// Build targets: `e_1..e_l` plus, when `include_eos`, a final EOS class row.
pub fn target_blocks<T: Scalar>(
    layout: &Layout,
    grid: &GridConfig,
    include_eos: bool,
) -> Result<TargetBlocks<T>> {
    let l = layout.len();
    let off = grid.block_offsets();
    let sizes = grid.block_sizes();
    let n_pos = if include_eos { l + 1 } else { l };
    let mut class = Tensor::zeros(n_pos, sizes[0]);
    let mut x = Tensor::zeros(l, sizes[1]);
    let mut y = Tensor::zeros(l, sizes[2]);
    let mut w = Tensor::zeros(l, sizes[3]);
    let mut h = Tensor::zeros(l, sizes[4]);
    for (i, e) in layout.elements.iter().enumerate() {
        let tok = encode_output_token(e, grid)?;
        for (j, &v) in tok[off[0]..off[0] + sizes[0]].iter().enumerate() {
            if v == 1.0 {
                class.set(i, j, T::ONE);
            }
        }
        let put = |dst: &mut Tensor<T>, block: usize| {
            for (j, &v) in tok[off[block]..off[block] + sizes[block]].iter().enumerate() {
                if v == 1.0 {
                    dst.set(i, j, T::ONE);
                }
            }
        };
        put(&mut x, 1);
        put(&mut y, 2);
        put(&mut w, 3);
        put(&mut h, 4);
    }
    if include_eos {
        let eos = sentinel_output_token(grid, true);
        for (j, &v) in eos[off[0]..off[0] + sizes[0]].iter().enumerate() {
            if v == 1.0 {
                class.set(l, j, T::ONE);
            }
        }
    }
    Ok(TargetBlocks { class, x, y, w, h })
}

/// Sum of cross-entropies over positions and the five token segments.
pub fn reconstruction_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    blocks: &LogitBlocks,
    targets: &TargetBlocks<T>,
) -> Result<crate::graph::Var> {
    let n_pos = targets.n_positions();
    if g.shape(blocks.class).0 != n_pos {
        return Err(Error::ShapeMismatch {
            op: "reconstruction_loss",
            details: format!(
                "{} class logit rows vs {} target rows",
                g.shape(blocks.class).0,
                n_pos
            ),
        });
    }
    let mut total = g.cross_entropy(blocks.class, &targets.class)?;
    let n_coord = targets.n_coord_rows();
    if n_coord > 0 {
        for (logit, target) in [
            (blocks.x, &targets.x),
            (blocks.y, &targets.y),
            (blocks.w, &targets.w),
            (blocks.h, &targets.h),
        ] {
            let sliced = g.slice_rows(logit, 0, n_coord)?;
            let ce = g.cross_entropy(sliced, target)?;
            total = g.add(total, ce)?;
        }
    }
    Ok(total)
}

/// Negated β-ELBO for minimization: `recon + β·kl`.
pub fn elbo_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    recon: crate::graph::Var,
    kl: crate::graph::Var,
    beta: f64,
) -> Result<crate::graph::Var> {
    let scaled = g.scale(kl, T::from_f64(beta));
    g.add(recon, scaled)
}

/// One row of the training log (also the CSV schema).
#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub beta: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: u64,
    pub log: Vec<StepLog>,
    pub length_dist: LengthDistribution,
    pub final_recon: f64,
    pub final_kl: f64,
    pub stopped_early: bool,
}

fn normal_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<f32> {
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

/// Forward pass + loss for one layout; returns `(loss, recon, kl)` vars.
fn item_loss(
    model: &LayoutVae<f32>,
    g: &mut Graph<'_, f32>,
    layout: &Layout,
    beta: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(crate::graph::Var, crate::graph::Var, crate::graph::Var)> {
    let grid = model.config.grid;
    let enc_input = model.encoder_input(layout)?;
    let (post, _) = model.encode(g, &enc_input, training, rng)?;
    let (mu_rows, mu_cols) = g.shape(post.mu);
    let eps = if training {
        normal_tensor(mu_rows, mu_cols, rng)
    } else {
        Tensor::zeros(mu_rows, mu_cols)
    };
    let z = reparameterize(g, &post, &eps)?;
    let (blocks, targets) = match model.config.variant {
        DecoderVariant::Ar => {
            let dec_input = model.decoder_input(layout)?;
            let (blocks, _) = model.decode_ar(g, z, &dec_input, training, rng)?;
            (blocks, target_blocks::<f32>(layout, &grid, true)?)
        }
        DecoderVariant::NonAr => {
            let (blocks, _) = model.decode_nonar(g, z, training, rng)?;
            (blocks, target_blocks::<f32>(layout, &grid, false)?)
        }
    };
    let recon = reconstruction_loss(g, &blocks, &targets)?;
    let kl = if model.has_learned_prior() {
        let (pm, plv) = model.learned_prior_params(g, mu_rows.max(1))?;
        let pm = g.slice_rows(pm, 0, mu_rows)?;
        let plv = g.slice_rows(plv, 0, mu_rows)?;
        kl_to_gaussian(g, &post, pm, plv)?
    } else {
        kl_to_standard_normal(g, &post)?
    };
    let loss = elbo_loss(g, recon, kl, beta)?;
    Ok((loss, recon, kl))
}

/// Teacher-forced per-segment argmax accuracy at `z = μ` (no sampling,
/// dropout off).
pub fn teacher_forced_accuracy(model: &LayoutVae<f32>, dataset: &[Layout]) -> Result<f64> {
    let grid = model.config.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut hits = 0usize;
    let mut total = 0usize;
    for layout in dataset {
        let mut g = Graph::new(&model.store);
        let enc_input = model.encoder_input(layout)?;
        let (post, _) = model.encode(&mut g, &enc_input, false, &mut rng)?;
        let (rows, cols) = g.shape(post.mu);
        let z = reparameterize(&mut g, &post, &Tensor::zeros(rows, cols))?;
        let (blocks, targets) = match model.config.variant {
            DecoderVariant::Ar => {
                let dec_input = model.decoder_input(layout)?;
                let (blocks, _) = model.decode_ar(&mut g, z, &dec_input, false, &mut rng)?;
                (blocks, target_blocks::<f32>(layout, &grid, true)?)
            }
            DecoderVariant::NonAr => {
                let (blocks, _) = model.decode_nonar(&mut g, z, false, &mut rng)?;
                (blocks, target_blocks::<f32>(layout, &grid, false)?)
            }
        };
        let count_block = |logits: &Tensor<f32>, target: &Tensor<f32>, hits: &mut usize, total: &mut usize| {
            for r in 0..target.rows() {
                let pred = argmax(logits.row(r));
                let want = argmax(target.row(r));
                if pred == want {
                    *hits += 1;
                }
                *total += 1;
            }
        };
        count_block(g.value(blocks.class), &targets.class, &mut hits, &mut total);
        count_block(g.value(blocks.x), &targets.x, &mut hits, &mut total);
        count_block(g.value(blocks.y), &targets.y, &mut hits, &mut total);
        count_block(g.value(blocks.w), &targets.w, &mut hits, &mut total);
        count_block(g.value(blocks.h), &targets.h, &mut hits, &mut total);
    }
    if total == 0 {
        return Err(Error::Dataset("accuracy over empty dataset".into()));
    }
    Ok(hits as f64 / total as f64)
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Deterministic (z = μ) mean reconstruction and KL over a dataset.
pub fn eval_losses(model: &LayoutVae<f32>, dataset: &[Layout]) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Dataset("eval_losses over empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    for layout in dataset {
        let mut g = Graph::new(&model.store);
        let (_, recon, kl) = item_loss(model, &mut g, layout, 1.0, false, &mut rng)?;
        recon_sum += g.value(recon).to_scalar()? as f64;
        kl_sum += g.value(kl).to_scalar()? as f64;
    }
    let n = dataset.len() as f64;
    Ok((recon_sum / n, kl_sum / n))
}

/// Teacher-forced training loop. Shuffles each epoch with the run seed,
/// averages gradients over the batch, clips by global norm, steps Adam under
/// the warm-up schedule, and logs one CSV row per step. A NaN loss aborts
/// with the step diagnostic. Checkpoints are written per epoch when
/// `out_dir` is given.
pub fn train(
    model: &mut LayoutVae<f32>,
    dataset: &[Layout],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    for (i, layout) in dataset.iter().enumerate() {
        layout.validate(model.config.max_elements).map_err(|e| {
            Error::Dataset(format!("layout {} invalid: {}", i, e))
        })?;
        if model.config.variant == DecoderVariant::NonAr && layout.is_empty() {
            return Err(Error::Dataset(format!(
                "layout {} is empty; the non-autoregressive variant needs l >= 1",
                i
            )));
        }
    }
    // p(s) has support s >= 1; empty layouts (legal for the autoregressive
    // variant) don't contribute a length.
    let lengths: Vec<usize> = dataset.iter().map(|l| l.len()).filter(|&l| l > 0).collect();
    let length_dist = LengthDistribution::from_lengths(&lengths, model.config.max_elements)
        .map_err(|_| Error::Dataset("no nonempty layouts to build p(s) from".into()))?;
    let variant = model.config.variant;
    let beta_target = cfg.resolved_beta_target(variant);
    let epochs = cfg.resolved_epochs(variant);
    let d_model = model.config.block.d_model;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::<f32>::new(&model.store);
    let mut log: Vec<StepLog> = Vec::new();
    let mut step: u64 = 0;
    let mut stopped_early = false;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    'epochs: for epoch in 0..epochs {
        // Fisher-Yates reshuffle with the run rng.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for batch in order.chunks(cfg.batch_size) {
            let beta = beta_at(step, beta_target, cfg.schedule_k, cfg.schedule_b);
            let lr = lr_at(step + 1, d_model, cfg.warmup_steps)?;
            let mut grads = model.store.zero_grads();
            let inv_batch = 1.0 / batch.len() as f32;
            let mut recon_mean = 0.0f64;
            let mut kl_mean = 0.0f64;
            for &idx in batch {
                let mut g = Graph::new(&model.store);
                let (loss, recon, kl) =
                    item_loss(model, &mut g, &dataset[idx], beta, true, &mut rng)?;
                let scaled = g.scale(loss, inv_batch);
                let loss_v = g.value(scaled).to_scalar()? as f64;
                if !loss_v.is_finite() {
                    return Err(Error::TrainingAborted {
                        step,
                        lr,
                        beta,
                        reason: "non-finite loss".into(),
                    });
                }
                recon_mean += g.value(recon).to_scalar()? as f64 / batch.len() as f64;
                kl_mean += g.value(kl).to_scalar()? as f64 / batch.len() as f64;
                g.backward(scaled)?;
                g.accumulate_param_grads(&mut grads);
            }
            clip_global_norm(&mut grads, cfg.grad_clip);
            adam.step(&mut model.store, &grads, lr)?;
            log.push(StepLog {
                step,
                epoch,
                recon: recon_mean,
                kl: kl_mean,
                beta,
                lr,
            });
            step += 1;
            if let (Some(target), true) = (
                cfg.stop_at_accuracy,
                step.is_multiple_of(cfg.accuracy_check_every.max(1)),
            ) {
                if teacher_forced_accuracy(model, dataset)? >= target {
                    stopped_early = true;
                    break 'epochs;
                }
            }
            if let Some(max) = cfg.max_steps {
                if step >= max {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }
        if let Some(dir) = out_dir {
            save_checkpoint(model, Some(&length_dist), &dir.join(format!("checkpoint_epoch{}.json", epoch)))?;
        }
    }

    if let Some(dir) = out_dir {
        save_checkpoint(model, Some(&length_dist), &dir.join("checkpoint.json"))?;
        write_log_csv(&dir.join("train_log.csv"), &log)?;
    }
    let (final_recon, final_kl) = eval_losses(model, dataset)?;
    Ok(TrainReport {
        steps: step,
        log,
        length_dist,
        final_recon,
        final_kl,
        stopped_early,
    })
}

/// CSV with the column schema `step,epoch,recon,kl,beta,lr`.
pub fn write_log_csv(path: &Path, log: &[StepLog]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,epoch,recon,kl,beta,lr")?;
    for row in log {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            row.step, row.epoch, row.recon, row.kl, row.beta, row.lr
        )?;
    }
    Ok(())
}
