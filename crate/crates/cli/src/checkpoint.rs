//! Training checkpoints.
//!
//! Single binary file, little-endian throughout:
//!
//! ```text
//! magic     8 × u8   "PIRTCKP1"
//! version   u32      1
//! config    embed_dim u32, token_width u32, tokens_per_sample u8,
//!           pooling u8 (0 concat, 1 mean, 2 cls, 3 dist), pad u16,
//!           epochs u32, batch_size u32, seed u64,
//!           alpha f64, delta f64, lambda f64,
//!           base_lr f64, weight_decay f64, beta1 f64, beta2 f64, eps f64,
//!           gamma f64, proxy_lr_multiplier f64,
//!           step_size u32, warmup_epochs u32, num_classes u32
//! class ids num_classes × i64
//! arrays    each as rows u32, cols u32, rows·cols × f64:
//!           head weights, head bias (1 × embed_dim), proxies,
//!           adam m/v for weights, bias, proxies (six arrays)
//! steps     3 × u64 (weights, bias, proxies step counters)
//! ```
//!
//! Parameters and optimizer state are stored as raw f64 bits, so a
//! save/load round-trip reproduces the training state exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use pirt_core::data::TokenFeatureSet;
use pirt_core::head::{PoolingMethod, ProjectionHead, ProxyMatrix};
use pirt_core::linalg::Matrix;
use pirt_core::loss::LossConfig;
use pirt_core::optim::{AdamState, GroupedAdamW, OptimConfig};
use pirt_core::trainer::{TrainConfig, TrainedModel};

use crate::error::{Error, Result};
use crate::features::{ensure_eof, read_exact, read_f64, read_i64, read_u32, read_u64};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PIRTCKP1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume or evaluate a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub tokens_per_sample: usize,
    pub model: TrainedModel,
    pub optimizer: GroupedAdamW,
}

impl Checkpoint {
    /// Error out unless this checkpoint can embed the given feature set.
    pub fn ensure_compatible(&self, features: &TokenFeatureSet) -> Result<()> {
        if features.token_width() != self.model.token_width {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint expects token width {}, feature file has {}",
                self.model.token_width,
                features.token_width()
            )));
        }
        if features.tokens_per_sample() == 1 && self.model.pooling != PoolingMethod::Cls {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint pools with {} but the feature file has a single token per sample",
                self.model.pooling
            )));
        }
        Ok(())
    }
}

fn pooling_code(method: PoolingMethod) -> u8 {
    match method {
        PoolingMethod::Concat => 0,
        PoolingMethod::Mean => 1,
        PoolingMethod::Cls => 2,
        PoolingMethod::Dist => 3,
    }
}

fn pooling_from_code(code: u8) -> Result<PoolingMethod> {
    Ok(match code {
        0 => PoolingMethod::Concat,
        1 => PoolingMethod::Mean,
        2 => PoolingMethod::Cls,
        3 => PoolingMethod::Dist,
        _ => return Err(Error::CorruptCheckpoint("unknown pooling code")),
    })
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    for &v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, expect: (usize, usize), what: &str) -> Result<Matrix> {
    let rows = read_u32(r, "array rows")? as usize;
    let cols = read_u32(r, "array cols")? as usize;
    if (rows, cols) != expect {
        return Err(Error::ConfigMismatch(format!(
            "{what} declared as {rows}x{cols}, config implies {}x{}",
            expect.0, expect.1
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r, "array payload")?);
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let train = &checkpoint.train;
    let model = &checkpoint.model;

    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(train.embed_dim as u32).to_le_bytes())?;
    w.write_all(&(model.token_width as u32).to_le_bytes())?;
    w.write_all(&[checkpoint.tokens_per_sample as u8, pooling_code(model.pooling)])?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&(train.epochs as u32).to_le_bytes())?;
    w.write_all(&(train.batch_size as u32).to_le_bytes())?;
    w.write_all(&train.seed.to_le_bytes())?;
    for v in [
        train.loss.alpha,
        train.loss.delta,
        train.loss.lambda,
        train.optim.base_lr,
        train.optim.weight_decay,
        train.optim.beta1,
        train.optim.beta2,
        train.optim.eps,
        train.optim.gamma,
        train.optim.proxy_lr_multiplier,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(train.optim.step_size as u32).to_le_bytes())?;
    w.write_all(&(train.optim.warmup_epochs as u32).to_le_bytes())?;
    w.write_all(&(model.class_ids.len() as u32).to_le_bytes())?;
    for &id in &model.class_ids {
        w.write_all(&id.to_le_bytes())?;
    }

    write_matrix(&mut w, &model.head.weights)?;
    write_matrix(&mut w, &Matrix::from_vec(1, model.head.bias.len(), model.head.bias.clone()))?;
    write_matrix(&mut w, model.proxies.as_matrix())?;

    let opt = &checkpoint.optimizer;
    let pooled_dim = model.head.weights.rows();
    let embed_dim = model.head.weights.cols();
    let r = model.proxies.num_proxies();
    for (state, rows, cols) in [
        (&opt.weights, pooled_dim, embed_dim),
        (&opt.bias, 1, embed_dim),
        (&opt.proxies, embed_dim, r),
    ] {
        write_matrix(&mut w, &Matrix::from_vec(rows, cols, state.m.clone()))?;
        write_matrix(&mut w, &Matrix::from_vec(rows, cols, state.v.clone()))?;
    }
    for state in [&opt.weights, &opt.bias, &opt.proxies] {
        w.write_all(&state.step.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic").map_err(reclassify)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic"));
    }
    let version = read_u32(&mut r, "version").map_err(reclassify)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }

    let embed_dim = read_u32(&mut r, "embed dim").map_err(reclassify)? as usize;
    let token_width = read_u32(&mut r, "token width").map_err(reclassify)? as usize;
    let mut small = [0u8; 2];
    read_exact(&mut r, &mut small, "pooling").map_err(reclassify)?;
    let tokens_per_sample = small[0] as usize;
    let pooling = pooling_from_code(small[1])?;
    let mut pad = [0u8; 2];
    read_exact(&mut r, &mut pad, "padding").map_err(reclassify)?;
    let epochs = read_u32(&mut r, "epochs").map_err(reclassify)? as usize;
    let batch_size = read_u32(&mut r, "batch size").map_err(reclassify)? as usize;
    let seed = read_u64(&mut r, "seed").map_err(reclassify)?;
    let mut f = [0f64; 10];
    for v in f.iter_mut() {
        *v = read_f64(&mut r, "config floats").map_err(reclassify)?;
    }
    let step_size = read_u32(&mut r, "step size").map_err(reclassify)? as usize;
    let warmup_epochs = read_u32(&mut r, "warmup epochs").map_err(reclassify)? as usize;
    let num_classes = read_u32(&mut r, "class count").map_err(reclassify)? as usize;
    let mut class_ids = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        class_ids.push(read_i64(&mut r, "class ids").map_err(reclassify)?);
    }

    let train = TrainConfig {
        epochs,
        batch_size,
        embed_dim,
        pooling,
        loss: LossConfig {
            alpha: f[0],
            delta: f[1],
            lambda: f[2],
        },
        optim: OptimConfig {
            base_lr: f[3],
            weight_decay: f[4],
            beta1: f[5],
            beta2: f[6],
            eps: f[7],
            gamma: f[8],
            proxy_lr_multiplier: f[9],
            step_size,
            warmup_epochs,
        },
        seed,
    };

    let pooled_dim = pooling.output_dim(token_width);
    let weights = read_matrix(&mut r, (pooled_dim, embed_dim), "head weights")
        .map_err(reclassify_shape)?;
    let bias = read_matrix(&mut r, (1, embed_dim), "head bias").map_err(reclassify_shape)?;
    let proxies = read_matrix(&mut r, (embed_dim, num_classes), "proxy matrix")
        .map_err(reclassify_shape)?;

    let mut states = Vec::new();
    for (rows, cols, what) in [
        (pooled_dim, embed_dim, "weights adam state"),
        (1usize, embed_dim, "bias adam state"),
        (embed_dim, num_classes, "proxy adam state"),
    ] {
        let m = read_matrix(&mut r, (rows, cols), what).map_err(reclassify_shape)?;
        let v = read_matrix(&mut r, (rows, cols), what).map_err(reclassify_shape)?;
        states.push((m, v));
    }
    let mut steps = [0u64; 3];
    for s in steps.iter_mut() {
        *s = read_u64(&mut r, "step counters").map_err(reclassify)?;
    }
    ensure_eof(&mut r)?;

    let (wm, wv) = states.remove(0);
    let (bm, bv) = states.remove(0);
    let (pm, pv) = states.remove(0);
    Ok(Checkpoint {
        train,
        tokens_per_sample,
        model: TrainedModel {
            head: ProjectionHead {
                weights,
                bias: bias.data().to_vec(),
            },
            proxies: ProxyMatrix::from_matrix(proxies),
            class_ids,
            pooling,
            token_width,
        },
        optimizer: GroupedAdamW {
            weights: adam_state(wm, wv, steps[0]),
            bias: adam_state(bm, bv, steps[1]),
            proxies: adam_state(pm, pv, steps[2]),
        },
    })
}

fn adam_state(m: Matrix, v: Matrix, step: u64) -> AdamState {
    AdamState {
        m: m.data().to_vec(),
        v: v.data().to_vec(),
        step,
    }
}

/// Short reads inside a checkpoint are corruption, not a feature-file error.
fn reclassify(err: Error) -> Error {
    match err {
        Error::TruncatedFile { .. } => Error::CorruptCheckpoint("file truncated"),
        other => other,
    }
}

fn reclassify_shape(err: Error) -> Error {
    match err {
        Error::TruncatedFile { .. } => Error::CorruptCheckpoint("file truncated"),
        other => other,
    }
}
