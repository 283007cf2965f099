//! Batch CLI for the layout VAE: train / sample / eval / render /
//! interpolate / attn / convergence. Configuration comes from an optional
//! JSON file with flag overrides; all randomness flows from the seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use layoutgen::config::RunConfig;
use layoutgen::dataset::{load_dataset, write_jsonl};
use layoutgen::error::{Error, Result};
use layoutgen::layout::{GridConfig, Layout};
use layoutgen::metrics::{evaluate, unique_matches};
use layoutgen::model::{load_checkpoint, DecoderVariant, LayoutVae, PriorKind};
use layoutgen::sample::{
    draw_ar_latent, export_attention, interpolate, sample_ar, sample_ar_with_z, sample_nonar,
    sampler_rng, standard_normal_tensor, Strategy,
};
use layoutgen::svg::render_svg;
use layoutgen::synth::two_column_layouts;
use layoutgen::train::train;

#[derive(Parser)]
#[command(name = "layoutgen", version, about = "Layout generation: train, sample, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the JSON run configuration.
#[derive(Args, Clone)]
struct Overrides {
    /// Path to a run-configuration JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Decoder variant: `ar` or `nonar`.
    #[arg(long)]
    variant: Option<String>,
    /// Prior: `fixed` or `learned`.
    #[arg(long)]
    prior: Option<String>,
    /// Discretization grid as `HxW`, e.g. `32x32`.
    #[arg(long)]
    grid: Option<String>,
    /// Maximum number of elements when sampling.
    #[arg(long)]
    max_len: Option<usize>,
    /// Sampling strategy: greedy | categorical | top-k:<K> | nucleus:<P>.
    #[arg(long)]
    strategy: Option<String>,
    /// Dataset path (COCO annotation JSON or line-delimited layout JSON).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.train.seed = seed;
            cfg.sampling.seed = seed;
        }
        if let Some(v) = &self.variant {
            cfg.variant = match v.as_str() {
                "ar" => DecoderVariant::Ar,
                "nonar" => DecoderVariant::NonAr,
                other => {
                    return Err(Error::InvalidConfig {
                        violations: vec![format!("--variant {} (expected ar|nonar)", other)],
                    })
                }
            };
        }
        if let Some(p) = &self.prior {
            cfg.prior = match p.as_str() {
                "fixed" => PriorKind::Fixed,
                "learned" => PriorKind::Learned,
                other => {
                    return Err(Error::InvalidConfig {
                        violations: vec![format!("--prior {} (expected fixed|learned)", other)],
                    })
                }
            };
        }
        if let Some(g) = &self.grid {
            let parts: Vec<&str> = g.split('x').collect();
            let parsed: Option<(usize, usize)> = match parts.as_slice() {
                [h, w] => h.parse().ok().zip(w.parse().ok()),
                _ => None,
            };
            let (h, w) = parsed.ok_or_else(|| Error::InvalidConfig {
                violations: vec![format!("--grid {} (expected HxW)", g)],
            })?;
            cfg.grid = GridConfig { h, w, c: cfg.grid.c };
        }
        if let Some(m) = self.max_len {
            cfg.sampling.max_len = m;
        }
        if let Some(s) = &self.strategy {
            cfg.sampling.strategy = s.parse::<Strategy>()?;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints plus a CSV log.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Override the epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Hard cap on optimizer steps.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Override the batch size.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Train on the built-in synthetic two-column set (no dataset file).
        #[arg(long)]
        toy: bool,
    },
    /// Sample layouts from a checkpoint into line-delimited JSON.
    Sample {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of layouts to generate.
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Metric report for a generated set against a real set.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Generated layouts (line-delimited JSON).
        #[arg(long)]
        generated: PathBuf,
        /// Real layouts (line-delimited JSON or COCO annotations).
        #[arg(long)]
        real: PathBuf,
        /// Random projections for the sliced box Wasserstein distance.
        #[arg(long, default_value_t = 128)]
        n_proj: usize,
    },
    /// Render layouts from a file to SVG documents.
    Render {
        #[command(flatten)]
        overrides: Overrides,
        /// Layout file (line-delimited JSON or COCO annotations).
        #[arg(long)]
        input: PathBuf,
        /// How many layouts to render (from the start of the file).
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
    /// Decode the line between two random latent vectors.
    Interpolate {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of interpolation steps (inclusive of both endpoints).
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
    /// Export encoder/decoder attention maps for one layout as JSON.
    Attn {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the layout inside the dataset file.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Train on growing subsets and report unique-match counts.
    Convergence {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated subset sizes, e.g. `10,50,100`.
        #[arg(long)]
        sizes: String,
        /// Trainings per subset size.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Samples drawn per trained model.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Fraction of the dataset held out for matching.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        /// Cap on optimizer steps per training.
        #[arg(long)]
        max_steps: Option<u64>,
    },
}

fn load_layouts(path: &Path, cfg: &RunConfig) -> Result<Vec<Layout>> {
    let (layouts, summary) = load_dataset(path, &cfg.filters, &cfg.grid)?;
    if let Some(s) = summary {
        eprintln!(
            "ingested {}: {} images -> {} layouts ({} classes; dropped {} small, {} crowd, {} long, {} empty)",
            path.display(),
            s.images,
            s.kept_layouts,
            s.n_classes,
            s.dropped_small_boxes,
            s.dropped_crowd,
            s.dropped_long_layouts,
            s.empty_layouts
        );
    }
    Ok(layouts)
}

fn cmd_train(
    overrides: &Overrides,
    epochs: Option<usize>,
    max_steps: Option<u64>,
    batch_size: Option<usize>,
    toy: bool,
) -> Result<()> {
    let mut cfg = overrides.resolve()?;
    if toy && cfg.dataset.is_none() {
        // Built-in toy set: small grid, three classes.
        cfg.grid = GridConfig { h: 16, w: 16, c: 3 };
    }
    if let Some(e) = epochs {
        cfg.train.epochs = Some(e);
    }
    if let Some(m) = max_steps {
        cfg.train.max_steps = Some(m);
    }
    if let Some(b) = batch_size {
        cfg.train.batch_size = b;
    }
    cfg.validate()?;
    let dataset = match (&cfg.dataset, toy) {
        (Some(path), _) => load_layouts(path, &cfg)?,
        (None, true) => two_column_layouts(10, &cfg.grid, cfg.seed),
        (None, false) => {
            return Err(Error::Dataset(
                "train needs --dataset (or --toy for the synthetic set)".into(),
            ))
        }
    };
    let mut model = LayoutVae::<f32>::new(cfg.model_config(), cfg.seed)?;
    let report = train(&mut model, &dataset, &cfg.train, Some(&cfg.out_dir))?;
    let last = report.log.last();
    println!(
        "trained {} steps on {} layouts; final recon {:.4}, kl {:.4}{}",
        report.steps,
        dataset.len(),
        report.final_recon,
        report.final_kl,
        last.map(|l| format!(" (last lr {:.3e})", l.lr)).unwrap_or_default()
    );
    println!("checkpoint: {}", cfg.out_dir.join("checkpoint.json").display());
    Ok(())
}

fn cmd_sample(overrides: &Overrides, checkpoint: &Path, n: usize) -> Result<()> {
    let cfg = overrides.resolve()?;
    let (model, length_dist) = load_checkpoint(checkpoint)?;
    let mut sampling = cfg.sampling;
    sampling.max_len = sampling.max_len.min(model.config.max_elements);
    sampling.validate(model.config.max_elements)?;
    let mut rng = sampler_rng(cfg.seed, 0);
    let mut layouts = Vec::with_capacity(n);
    let mut truncated = 0usize;
    for _ in 0..n {
        let layout = match model.config.variant {
            DecoderVariant::Ar => {
                let z = draw_ar_latent(&model, &mut rng)?;
                let (layout, hit_cap) = sample_ar_with_z(&model, &z, &sampling, &mut rng)?;
                if hit_cap {
                    truncated += 1;
                }
                layout
            }
            DecoderVariant::NonAr => {
                let dist = length_dist.as_ref().ok_or_else(|| {
                    Error::Model("checkpoint lacks the length distribution".into())
                })?;
                sample_nonar(&model, dist, &sampling, &mut rng)?
            }
        };
        layouts.push(layout);
    }
    if truncated > 0 {
        eprintln!("{} of {} samples truncated at max_len {}", truncated, n, sampling.max_len);
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.join("samples.jsonl");
    write_jsonl(&out, &layouts)?;
    println!("wrote {} layouts to {}", layouts.len(), out.display());
    Ok(())
}

fn cmd_eval(overrides: &Overrides, generated: &Path, real: &Path, n_proj: usize) -> Result<()> {
    let cfg = overrides.resolve()?;
    let gen = load_layouts(generated, &cfg)?;
    let real = load_layouts(real, &cfg)?;
    let report = evaluate(&gen, &real, n_proj, cfg.seed)?;
    println!("{}", report.table());
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.join("metrics.json");
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!("report: {}", out.display());
    Ok(())
}

fn cmd_render(overrides: &Overrides, input: &Path, n: usize) -> Result<()> {
    let cfg = overrides.resolve()?;
    let layouts = load_layouts(input, &cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut written = 0;
    for (i, layout) in layouts.iter().take(n).enumerate() {
        let svg = render_svg(layout, None);
        std::fs::write(cfg.out_dir.join(format!("layout_{:04}.svg", i)), svg)?;
        written += 1;
    }
    println!("rendered {} layouts to {}", written, cfg.out_dir.display());
    Ok(())
}

fn cmd_interpolate(overrides: &Overrides, checkpoint: &Path, steps: usize) -> Result<()> {
    let cfg = overrides.resolve()?;
    let (model, _) = load_checkpoint(checkpoint)?;
    if model.config.variant != DecoderVariant::Ar {
        return Err(Error::Model(
            "interpolate needs an autoregressive checkpoint (aggregated latent)".into(),
        ));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("interpolate needs >= 2 steps".into()));
    }
    let mut sampling = cfg.sampling;
    sampling.max_len = sampling.max_len.min(model.config.max_elements);
    let mut rng = sampler_rng(cfg.seed, 0);
    let z1 = standard_normal_tensor(1, model.config.d_z, &mut rng);
    let z2 = standard_normal_tensor(1, model.config.d_z, &mut rng);
    let mut layouts = Vec::with_capacity(steps);
    for i in 0..steps {
        let lambda = i as f64 / (steps - 1) as f64;
        let z = interpolate(&z1, &z2, lambda)?;
        let (layout, _) = sample_ar_with_z(&model, &z, &sampling, &mut rng)?;
        layouts.push(layout);
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.join("interpolation.jsonl");
    write_jsonl(&out, &layouts)?;
    for (i, layout) in layouts.iter().enumerate() {
        std::fs::write(
            cfg.out_dir.join(format!("interp_{:02}.svg", i)),
            render_svg(layout, None),
        )?;
    }
    println!("wrote {} interpolation steps to {}", layouts.len(), out.display());
    Ok(())
}

fn cmd_attn(overrides: &Overrides, checkpoint: &Path, index: usize) -> Result<()> {
    let cfg = overrides.resolve()?;
    let dataset_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::Dataset("attn needs --dataset".into()))?;
    let layouts = load_layouts(&dataset_path, &cfg)?;
    let layout = layouts
        .get(index)
        .ok_or_else(|| Error::Dataset(format!("index {} outside dataset of {}", index, layouts.len())))?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let export = export_attention(&model, layout)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.join(format!("attention_{:04}.json", index));
    std::fs::write(&out, serde_json::to_string(&export)?)?;
    println!(
        "wrote attention maps ({} encoder layers x {} heads) to {}",
        export.encoder.n_layers(),
        export.encoder.n_heads(),
        out.display()
    );
    Ok(())
}

fn cmd_convergence(
    overrides: &Overrides,
    sizes: &str,
    repeats: usize,
    samples: usize,
    holdout: f64,
    max_steps: Option<u64>,
) -> Result<()> {
    let mut cfg = overrides.resolve()?;
    if let Some(m) = max_steps {
        cfg.train.max_steps = Some(m);
    }
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad subset size {:?}", s)))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() || repeats == 0 {
        return Err(Error::InvalidArgument("need at least one size and one repeat".into()));
    }
    let dataset_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::Dataset("convergence needs --dataset".into()))?;
    let all = load_layouts(&dataset_path, &cfg)?;
    let n_holdout = ((all.len() as f64 * holdout).round() as usize).clamp(1, all.len() - 1);
    let (held_out, pool) = all.split_at(n_holdout);
    for &s in &sizes {
        if s > pool.len() {
            return Err(Error::Dataset(format!(
                "subset size {} exceeds training pool of {}",
                s,
                pool.len()
            )));
        }
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.join("convergence.csv");
    let mut rows = vec!["size,mean_matches,std_matches".to_string()];
    for &size in &sizes {
        let mut counts = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let rep_seed = cfg.seed ^ (size as u64) << 20 ^ rep as u64;
            // random subset of the pool
            let mut order: Vec<usize> = (0..pool.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            for i in (1..order.len()).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
            let subset: Vec<Layout> = order[..size].iter().map(|&i| pool[i].clone()).collect();
            let mut model = LayoutVae::<f32>::new(cfg.model_config(), rep_seed)?;
            let mut train_cfg = cfg.train.clone();
            train_cfg.seed = rep_seed;
            let report = train(&mut model, &subset, &train_cfg, None)?;
            let mut sampling = cfg.sampling;
            sampling.max_len = sampling.max_len.min(model.config.max_elements);
            let mut sample_rng = sampler_rng(rep_seed, 1);
            let mut generated = Vec::with_capacity(samples);
            for _ in 0..samples {
                let layout = match model.config.variant {
                    DecoderVariant::Ar => sample_ar(&model, &sampling, &mut sample_rng)?,
                    DecoderVariant::NonAr => {
                        sample_nonar(&model, &report.length_dist, &sampling, &mut sample_rng)?
                    }
                };
                generated.push(layout);
            }
            counts.push(unique_matches(&generated, held_out) as f64);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / counts.len() as f64;
        rows.push(format!("{},{},{}", size, mean, var.sqrt()));
        println!("size {}: mean matches {:.2} ± {:.2}", size, mean, var.sqrt());
    }
    std::fs::write(&out, rows.join("\n") + "\n")?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train { overrides, epochs, max_steps, batch_size, toy } => {
            cmd_train(overrides, *epochs, *max_steps, *batch_size, *toy)
        }
        Command::Sample { overrides, checkpoint, n } => cmd_sample(overrides, checkpoint, *n),
        Command::Eval { overrides, generated, real, n_proj } => {
            cmd_eval(overrides, generated, real, *n_proj)
        }
        Command::Render { overrides, input, n } => cmd_render(overrides, input, *n),
        Command::Interpolate { overrides, checkpoint, steps } => {
            cmd_interpolate(overrides, checkpoint, *steps)
        }
        Command::Attn { overrides, checkpoint, index } => cmd_attn(overrides, checkpoint, *index),
        Command::Convergence { overrides, sizes, repeats, samples, holdout, max_steps } => {
            cmd_convergence(overrides, sizes, *repeats, *samples, *holdout, *max_steps)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Single-line machine-parsable error.
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
