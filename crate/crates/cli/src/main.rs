//! Command-line interface for training and evaluating proxy-anchor retrieval
//! heads over precomputed token features.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use pirt_cli::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use pirt_cli::features::{load_features, write_features};
use pirt_cli::report::{
    write_metric_report, write_per_query_report, write_sweep_rows, write_train_log, SweepRow,
};
use pirt_cli::splits::{per_class_holdout, EvalPlan, SplitManifest};
use pirt_cli::synthetic::generate_synthetic;
use pirt_core::data::TokenFeatureSet;
use pirt_core::eval::{evaluate, proxy_stats, MetricReport, RetrievalIndex};
use pirt_core::gradcheck::check_loss_gradients;
use pirt_core::head::PoolingMethod;
use pirt_core::loss::LossConfig;
use pirt_core::optim::OptimConfig;
use pirt_core::trainer::{train, TrainConfig, TrainedModel};

#[derive(Parser)]
#[command(
    name = "pirt",
    about = "Proxy-anchor retrieval training with a soft-orthogonality penalty on proxies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Training hyperparameters shared by `train` and `sweep`.
#[derive(Args, Debug, Clone)]
struct HyperOpts {
    /// Run seed; every random choice derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "embed-dim", default_value_t = 512)]
    embed_dim: usize,
    /// Token pooling: concat, mean, cls, or dist.
    #[arg(long, default_value = "concat")]
    pooling: PoolingMethod,
    /// Scaling factor of the proxy-anchor loss.
    #[arg(long, default_value_t = 32.0)]
    alpha: f64,
    /// Margin of the proxy-anchor loss.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Weight of the soft-orthogonality penalty; 0 disables it.
    #[arg(long, default_value_t = 0.001)]
    lambda: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long = "batch-size", default_value_t = 128)]
    batch_size: usize,
    #[arg(long = "lr", default_value_t = 1e-4)]
    lr: f64,
    #[arg(long = "weight-decay", default_value_t = 1e-4)]
    weight_decay: f64,
    /// Proxy learning rate relative to the head.
    #[arg(long = "proxy-lr-mult", default_value_t = 100.0)]
    proxy_lr_mult: f64,
    #[arg(long = "warmup-epochs", default_value_t = 5)]
    warmup_epochs: usize,
    /// Epochs between learning-rate halvings.
    #[arg(long = "step-size", default_value_t = 5)]
    step_size: usize,
    /// Learning-rate decay factor per step.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
}

impl HyperOpts {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            embed_dim: self.embed_dim,
            pooling: self.pooling,
            loss: LossConfig {
                alpha: self.alpha,
                delta: self.delta,
                lambda: self.lambda,
            },
            optim: OptimConfig {
                base_lr: self.lr,
                weight_decay: self.weight_decay,
                step_size: self.step_size,
                gamma: self.gamma,
                warmup_epochs: self.warmup_epochs,
                proxy_lr_multiplier: self.proxy_lr_mult,
                ..OptimConfig::default()
            },
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered feature file.
    Synth {
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long = "per-class", default_value_t = 40)]
        per_class: usize,
        /// Token width D.
        #[arg(long = "token-width", default_value_t = 64)]
        token_width: usize,
        /// Cluster noise norm relative to the unit-norm class centers.
        #[arg(long, default_value_t = 0.15)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output feature file (.csv for the text fallback).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the projection head and proxies on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Optional split manifest; its train classes select the samples.
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV (default: <out>.log.csv).
        #[arg(long = "log-out")]
        log_out: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperOpts,
    },
    /// Evaluate retrieval metrics for a checkpoint on a feature file.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional split manifest selecting the evaluation protocol.
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Metric report CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-query CSV output.
        #[arg(long = "per-query-out")]
        per_query_out: Option<PathBuf>,
    },
    /// Check analytic loss gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Maximum allowed relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Train and evaluate a grid of embedding dims, penalty weights, and
    /// pooling methods; write one CSV row per grid point.
    Sweep {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Embedding dimensions to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256, 512, 1024])]
        dims: Vec<usize>,
        /// Penalty weights to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [0.001f64])]
        lambdas: Vec<f64>,
        /// Pooling methods to sweep.
        #[arg(long, value_delimiter = ',', default_values = ["concat", "dist"])]
        poolings: Vec<PoolingMethod>,
        #[command(flatten)]
        hyper: HyperOpts,
    },
    /// Print proxy-geometry diagnostics from a checkpoint.
    ProxyStats {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Synth {
            classes,
            per_class,
            token_width,
            spread,
            seed,
            out,
        } => cmd_synth(classes, per_class, token_width, spread, seed, &out),
        Command::Train {
            features,
            splits,
            out,
            log_out,
            hyper,
        } => cmd_train(&features, splits.as_deref(), &out, log_out, &hyper),
        Command::Eval {
            features,
            checkpoint,
            splits,
            out,
            per_query_out,
        } => cmd_eval(
            &features,
            &checkpoint,
            splits.as_deref(),
            &out,
            per_query_out.as_deref(),
        ),
        Command::Gradcheck {
            instances,
            seed,
            step,
            tol,
        } => cmd_gradcheck(instances, seed, step, tol),
        Command::Sweep {
            features,
            splits,
            out,
            dims,
            lambdas,
            poolings,
            hyper,
        } => cmd_sweep(
            &features,
            splits.as_deref(),
            &out,
            &dims,
            &lambdas,
            &poolings,
            &hyper,
        ),
        Command::ProxyStats { checkpoint } => cmd_proxy_stats(&checkpoint),
    }
}

fn cmd_synth(
    classes: usize,
    per_class: usize,
    token_width: usize,
    spread: f64,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let set = generate_synthetic(classes, per_class, token_width, spread, seed)?;
    write_features(out, &set)?;
    println!(
        "wrote {} samples ({} classes, width {}) to {}",
        set.len(),
        classes,
        token_width,
        out.display()
    );
    Ok(())
}

fn load_manifest(path: Option<&Path>) -> anyhow::Result<Option<SplitManifest>> {
    Ok(match path {
        Some(p) => Some(SplitManifest::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    })
}

fn cmd_train(
    features_path: &Path,
    splits: Option<&Path>,
    out: &Path,
    log_out: Option<PathBuf>,
    hyper: &HyperOpts,
) -> anyhow::Result<()> {
    let features = load_features(features_path)
        .with_context(|| format!("loading {}", features_path.display()))?;
    let manifest = load_manifest(splits)?;
    let train_set = match &manifest {
        Some(m) => {
            let indices = m.train_indices(&features);
            if indices.is_empty() {
                bail!("split manifest selects no training samples");
            }
            features.subset(&indices)?
        }
        None => features.clone(),
    };

    let cfg = hyper.train_config();
    let outcome = train(&train_set, &cfg)?;
    let log_path = log_out.unwrap_or_else(|| default_log_path(out));
    write_train_log(&log_path, &outcome.log)?;
    let checkpoint = Checkpoint {
        train: cfg,
        tokens_per_sample: train_set.tokens_per_sample(),
        model: outcome.model,
        optimizer: outcome.optimizer,
    };
    save_checkpoint(out, &checkpoint)?;

    let last = outcome.log.records.last();
    println!(
        "trained {} classes on {} samples for {} epochs (final loss {})",
        checkpoint.model.class_ids.len(),
        train_set.len(),
        outcome.log.records.len(),
        last.map(|r| r.loss.to_string()).unwrap_or_else(|| "n/a".into()),
    );
    println!("checkpoint: {}", out.display());
    println!("log: {}", log_path.display());
    Ok(())
}

fn default_log_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".log.csv");
    checkpoint.with_file_name(name)
}

/// Embed the plan's sample sets and assemble the retrieval index.
fn build_index(
    features: &TokenFeatureSet,
    model: &TrainedModel,
    plan: &EvalPlan,
) -> anyhow::Result<RetrievalIndex> {
    let index = match plan {
        EvalPlan::SelfIndexed { samples } => {
            let subset = features.subset(samples)?;
            let embeddings = model.embed(&subset)?;
            RetrievalIndex::self_indexed(embeddings, subset.labels().to_vec())?
        }
        EvalPlan::QueryGallery { query, gallery } => {
            let query_set = features.subset(query)?;
            let gallery_set = features.subset(gallery)?;
            RetrievalIndex::new(
                model.embed(&gallery_set)?,
                gallery_set.labels().to_vec(),
                model.embed(&query_set)?,
                query_set.labels().to_vec(),
            )?
        }
    };
    Ok(index)
}

fn eval_with_plan(
    features: &TokenFeatureSet,
    model: &TrainedModel,
    plan: &EvalPlan,
) -> anyhow::Result<MetricReport> {
    Ok(evaluate(&build_index(features, model, plan)?)?)
}

fn cmd_eval(
    features_path: &Path,
    checkpoint_path: &Path,
    splits: Option<&Path>,
    out: &Path,
    per_query_out: Option<&Path>,
) -> anyhow::Result<()> {
    let features = load_features(features_path)
        .with_context(|| format!("loading {}", features_path.display()))?;
    let checkpoint = load_checkpoint(checkpoint_path)
        .with_context(|| format!("loading {}", checkpoint_path.display()))?;
    checkpoint.ensure_compatible(&features)?;

    let manifest = load_manifest(splits)?.unwrap_or_default();
    let plan = manifest.eval_plan(&features)?;
    let report = eval_with_plan(&features, &checkpoint.model, &plan)?;

    write_metric_report(out, &report)?;
    if let Some(path) = per_query_out {
        write_per_query_report(path, &report)?;
    }
    println!("p_at_1={}", report.p_at_1);
    println!("map_at_r={}", report.map_at_r);
    println!("report: {}", out.display());
    Ok(())
}

fn cmd_gradcheck(instances: usize, seed: u64, step: f64, tol: f64) -> anyhow::Result<()> {
    let summary = check_loss_gradients(instances, seed, step);
    println!(
        "proxy_anchor  max rel error {:.3e}",
        summary.max_err_proxy_anchor
    );
    println!("so_penalty    max rel error {:.3e}", summary.max_err_so);
    println!("combined      max rel error {:.3e}", summary.max_err_pirt);
    println!(
        "overall       max rel error {:.3e} over {} instances (tolerance {:.0e})",
        summary.max_rel_error(),
        summary.instances,
        tol
    );
    if summary.passed(tol) {
        println!("gradcheck PASS");
        Ok(())
    } else {
        bail!("gradcheck FAIL: max relative error exceeds tolerance");
    }
}

fn cmd_sweep(
    features_path: &Path,
    splits: Option<&Path>,
    out: &Path,
    dims: &[usize],
    lambdas: &[f64],
    poolings: &[PoolingMethod],
    hyper: &HyperOpts,
) -> anyhow::Result<()> {
    let features = load_features(features_path)
        .with_context(|| format!("loading {}", features_path.display()))?;
    let manifest = load_manifest(splits)?;
    let (train_set, plan) = match &manifest {
        Some(m) => {
            let indices = m.train_indices(&features);
            if indices.is_empty() {
                bail!("split manifest selects no training samples");
            }
            (features.subset(&indices)?, m.eval_plan(&features)?)
        }
        None => {
            // No manifest: deterministic per-class holdout for evaluation.
            let (train_idx, eval_idx) = per_class_holdout(features.labels());
            if eval_idx.is_empty() {
                bail!("dataset too small for the per-class holdout");
            }
            (
                features.subset(&train_idx)?,
                EvalPlan::SelfIndexed { samples: eval_idx },
            )
        }
    };

    let mut rows = Vec::new();
    for &embed_dim in dims {
        for &lambda in lambdas {
            for &pooling in poolings {
                let mut cfg = hyper.train_config();
                cfg.embed_dim = embed_dim;
                cfg.loss.lambda = lambda;
                cfg.pooling = pooling;
                let outcome = train(&train_set, &cfg)?;
                let report = eval_with_plan(&features, &outcome.model, &plan)?;
                println!(
                    "dim {embed_dim} lambda {lambda} pooling {pooling}: p_at_1={} map_at_r={}",
                    report.p_at_1, report.map_at_r
                );
                rows.push(SweepRow {
                    embed_dim,
                    lambda,
                    pooling,
                    p_at_1: report.p_at_1,
                    map_at_r: report.map_at_r,
                });
            }
        }
    }
    write_sweep_rows(out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_proxy_stats(checkpoint_path: &Path) -> anyhow::Result<()> {
    let checkpoint = load_checkpoint(checkpoint_path)
        .with_context(|| format!("loading {}", checkpoint_path.display()))?;
    let stats = proxy_stats(&checkpoint.model.proxies)?;
    println!("num_proxies={}", checkpoint.model.proxies.num_proxies());
    println!("embed_dim={}", checkpoint.model.proxies.dim());
    println!("so_penalty={}", stats.so_penalty);
    println!("max_offdiag_cosine={}", stats.max_offdiag_cosine);
    println!("mean_offdiag_cosine={}", stats.mean_offdiag_cosine);
    println!("min_col_norm={}", stats.min_col_norm);
    println!("max_col_norm={}", stats.max_col_norm);
    Ok(())
}
