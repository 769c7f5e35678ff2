//! Mini-batch training loop: pool → project → combined loss → grouped AdamW.
//!
//! The loop is strictly sequential and fully deterministic per seed: two runs
//! with the same configuration produce bit-identical parameters and log
//! entries (wall-clock timings aside).

use alloc::vec::Vec;

use crate::data::{dense_class_index, TokenFeatureSet};
use crate::error::{Error, Result};
use crate::head::{embed_features, pool, PoolingMethod, ProjectionHead, ProxyMatrix};
use crate::linalg::{gram_matrix, Matrix};
use crate::loss::{pirt_loss, so_penalty, EmbeddingBatch, LossConfig};
use crate::math;
use crate::optim::{GroupedAdamW, OptimConfig};
use crate::sampler::sample_batches;

/// Seed stream for the projection head initializer.
pub const STREAM_PROJECTION: u64 = 0;
/// Seed stream for the proxy initializer.
pub const STREAM_PROXIES: u64 = 1;
/// Seed stream for the per-epoch batch shuffle.
pub const STREAM_SAMPLER: u64 = 2;

/// Derive an independent seed for one consumer of the run seed
/// (SplitMix64 of `base + stream·φ`), so initializers and the sampler never
/// share an RNG stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub pooling: PoolingMethod,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            embed_dim: 512,
            pooling: PoolingMethod::Concat,
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be >= 2"));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be >= 1"));
        }
        self.loss.validate()?;
        self.optim.validate()
    }
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean combined loss over the epoch's batches, each evaluated on the
    /// pre-step parameters.
    pub loss: f64,
    /// Soft-orthogonality penalty of the proxies at the end of the epoch.
    pub so_penalty: f64,
    /// Largest off-diagonal |PᵀP| entry at the end of the epoch; the direct
    /// readout of proxy redundancy.
    pub max_offdiag_gram: f64,
    pub head_lr: f64,
    pub proxy_lr: f64,
    /// Wall-clock seconds; 0 in no_std builds. Excluded from determinism
    /// comparisons.
    pub wall_secs: f64,
}

/// Per-epoch records, one per completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// Equality of everything the seed determines (ignores wall time).
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.so_penalty.to_bits() == b.so_penalty.to_bits()
                    && a.max_offdiag_gram.to_bits() == b.max_offdiag_gram.to_bits()
                    && a.head_lr.to_bits() == b.head_lr.to_bits()
                    && a.proxy_lr.to_bits() == b.proxy_lr.to_bits()
            })
    }
}

/// Trained parameters plus the label bookkeeping needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub head: ProjectionHead,
    pub proxies: ProxyMatrix,
    /// Sorted distinct class IDs of the training set; proxy column `j`
    /// represents `class_ids[j]`.
    pub class_ids: Vec<i64>,
    pub pooling: PoolingMethod,
    pub token_width: usize,
}

impl TrainedModel {
    /// Embed a feature set with this model's pooling and head.
    pub fn embed(&self, features: &TokenFeatureSet) -> Result<Matrix> {
        if features.token_width() != self.token_width {
            return Err(Error::DimensionMismatch {
                expected: self.token_width,
                actual: features.token_width(),
            });
        }
        embed_features(features, &self.head, self.pooling)
    }
}

/// Everything `train` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub optimizer: GroupedAdamW,
    pub log: TrainLog,
}

#[cfg(feature = "std")]
fn elapsed_secs(start: &std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Train the projection head and proxies on a token feature set.
///
/// The class count is inferred from the training labels (one proxy per
/// distinct class). `epochs = 0` is a valid degenerate case and returns the
/// untouched initializations.
pub fn train(features: &TokenFeatureSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.tokens_per_sample() == 1 && cfg.pooling != PoolingMethod::Cls {
        return Err(Error::InvalidConfig(
            "single-token feature sets support only CLS pooling",
        ));
    }
    let n = features.len();
    let (class_ids, dense_labels) = dense_class_index(features.labels());
    let num_classes = class_ids.len();
    let pooled_dim = cfg.pooling.output_dim(features.token_width());

    let mut head = ProjectionHead::init(
        pooled_dim,
        cfg.embed_dim,
        derive_seed(cfg.seed, STREAM_PROJECTION),
    );
    let mut proxies = ProxyMatrix::init(
        num_classes,
        cfg.embed_dim,
        derive_seed(cfg.seed, STREAM_PROXIES),
    );
    let mut optimizer = GroupedAdamW::new(&head, &proxies);
    let sampler_seed = derive_seed(cfg.seed, STREAM_SAMPLER);

    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        #[cfg(feature = "std")]
        let epoch_start = std::time::Instant::now();

        let batches = sample_batches(n, cfg.batch_size, sampler_seed, epoch)?;
        let mut loss_sum = 0.0;
        let mut rates = None;
        for batch_indices in &batches {
            // Forward: pooled rows U, embeddings E = U·W + b.
            let b = batch_indices.len();
            let mut pooled = Matrix::zeros(b, pooled_dim);
            let mut labels = Vec::with_capacity(b);
            for (row, &i) in batch_indices.iter().enumerate() {
                let p = pool(features.token_pair(i), cfg.pooling)?;
                pooled.row_mut(row).copy_from_slice(&p);
                labels.push(dense_labels[i]);
            }
            let embeddings = {
                let mut e = pooled.matmul(&head.weights)?;
                for row in 0..b {
                    for (v, bias) in e.row_mut(row).iter_mut().zip(&head.bias) {
                        *v += bias;
                    }
                }
                e
            };

            let batch = EmbeddingBatch::new(embeddings, labels)?;
            let out = pirt_loss(&batch, &proxies, &cfg.loss)?;
            loss_sum += out.value;

            // Backward through the affine head: dW = Uᵀ·G, db = Σ rows of G.
            let grad_weights = pooled.transpose_matmul(&out.grad_embeddings)?;
            let mut grad_bias = alloc::vec![0.0; cfg.embed_dim];
            for row in 0..b {
                for (gb, g) in grad_bias.iter_mut().zip(out.grad_embeddings.row(row)) {
                    *gb += g;
                }
            }

            rates = Some(optimizer.step(
                &mut head,
                &mut proxies,
                &grad_weights,
                &grad_bias,
                &out.grad_proxies,
                epoch,
                &cfg.optim,
            )?);
        }

        let rates = rates.ok_or(Error::InvalidConfig("epoch produced no batches"))?;
        let so = so_penalty(&proxies).value;
        let gram = gram_matrix(proxies.as_matrix());
        let mut max_offdiag: f64 = 0.0;
        for i in 0..num_classes {
            for j in 0..num_classes {
                if i != j {
                    max_offdiag = max_offdiag.max(math::abs(gram.at(i, j)));
                }
            }
        }

        #[cfg(feature = "std")]
        let wall_secs = elapsed_secs(&epoch_start);
        #[cfg(not(feature = "std"))]
        let wall_secs = 0.0;

        log.records.push(EpochRecord {
            epoch,
            loss: loss_sum / batches.len() as f64,
            so_penalty: so,
            max_offdiag_gram: max_offdiag,
            head_lr: rates.head_lr,
            proxy_lr: rates.proxy_lr,
            wall_secs,
        });
    }

    Ok(TrainOutcome {
        model: TrainedModel {
            head,
            proxies,
            class_ids,
            pooling: cfg.pooling,
            token_width: features.token_width(),
        },
        optimizer,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn derived_seeds_are_stream_separated() {
        let a = derive_seed(42, STREAM_PROJECTION);
        let b = derive_seed(42, STREAM_PROXIES);
        let c = derive_seed(42, STREAM_SAMPLER);
        assert!(a != b && b != c && a != c);
        assert_eq!(a, derive_seed(42, STREAM_PROJECTION));
    }

    #[test]
    fn zero_epochs_returns_the_initializations() {
        let features = TokenFeatureSet::new(
            3,
            2,
            vec![0, 1, 0, 1],
            (0..24).map(|v| v as f64 / 10.0 + 0.1).collect(),
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 2,
            embed_dim: 4,
            pooling: PoolingMethod::Mean,
            seed: 9,
            ..TrainConfig::default()
        };
        let outcome = train(&features, &cfg).unwrap();
        let head = ProjectionHead::init(3, 4, derive_seed(9, STREAM_PROJECTION));
        let proxies = ProxyMatrix::init(2, 4, derive_seed(9, STREAM_PROXIES));
        assert_eq!(outcome.model.head, head);
        assert_eq!(outcome.model.proxies, proxies);
        assert!(outcome.log.records.is_empty());
    }

    #[test]
    fn class_ids_are_inferred_from_labels() {
        let features = TokenFeatureSet::new(
            2,
            2,
            vec![10, 3, 10],
            (0..12).map(|v| v as f64 + 1.0).collect(),
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 3,
            embed_dim: 2,
            pooling: PoolingMethod::Cls,
            ..TrainConfig::default()
        };
        let outcome = train(&features, &cfg).unwrap();
        assert_eq!(outcome.model.class_ids, vec![3, 10]);
        assert_eq!(outcome.model.proxies.num_proxies(), 2);
    }

    #[test]
    fn single_token_sets_require_cls_pooling() {
        let features = TokenFeatureSet::new(2, 1, vec![0, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            embed_dim: 2,
            pooling: PoolingMethod::Concat,
            ..TrainConfig::default()
        };
        assert!(train(&features, &cfg).is_err());
        let cfg = TrainConfig {
            pooling: PoolingMethod::Cls,
            ..cfg
        };
        assert!(train(&features, &cfg).is_ok());
    }
}
