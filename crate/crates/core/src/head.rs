//! The trainable model top: token pooling, the linear projection head, and
//! proxy initialization.
//!
//! The backbone itself is frozen and consumed as precomputed CLS/DIST token
//! states; everything trainable lives here. Pooling combines the two token
//! states into one vector, the head projects it into the embedding space, and
//! the proxy matrix holds one learnable column per training class.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::TokenFeatureSet;
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, Matrix};
use crate::math;

/// CLS and DIST token states of one sample, both of backbone width `D`.
#[derive(Debug, Clone, Copy)]
pub struct TokenPair<'a> {
    pub cls: &'a [f64],
    pub dist: &'a [f64],
}

/// How the CLS/DIST pair is reduced to a single vector before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingMethod {
    /// `[cls ‖ dist]`, CLS first; output width `2D`.
    Concat,
    /// Elementwise average of CLS and DIST; output width `D`.
    Mean,
    /// CLS token only.
    Cls,
    /// DIST token only.
    Dist,
}

impl PoolingMethod {
    pub const ALL: [PoolingMethod; 4] = [
        PoolingMethod::Concat,
        PoolingMethod::Mean,
        PoolingMethod::Cls,
        PoolingMethod::Dist,
    ];

    /// Width of the pooled vector for token width `d`.
    pub fn output_dim(self, token_width: usize) -> usize {
        match self {
            PoolingMethod::Concat => 2 * token_width,
            _ => token_width,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PoolingMethod::Concat => "concat",
            PoolingMethod::Mean => "mean",
            PoolingMethod::Cls => "cls",
            PoolingMethod::Dist => "dist",
        }
    }
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(PoolingMethod::Concat),
            "mean" => Ok(PoolingMethod::Mean),
            "cls" => Ok(PoolingMethod::Cls),
            "dist" => Ok(PoolingMethod::Dist),
            _ => Err(Error::InvalidConfig(
                "pooling must be one of concat|mean|cls|dist",
            )),
        }
    }
}

/// Combine a token pair into one pooled vector.
pub fn pool(tokens: TokenPair<'_>, method: PoolingMethod) -> Result<Vec<f64>> {
    if tokens.cls.len() != tokens.dist.len() {
        return Err(Error::DimensionMismatch {
            expected: tokens.cls.len(),
            actual: tokens.dist.len(),
        });
    }
    let pooled = match method {
        PoolingMethod::Concat => {
            let mut out = Vec::with_capacity(2 * tokens.cls.len());
            out.extend_from_slice(tokens.cls);
            out.extend_from_slice(tokens.dist);
            out
        }
        PoolingMethod::Mean => tokens
            .cls
            .iter()
            .zip(tokens.dist)
            .map(|(c, d)| (c + d) / 2.0)
            .collect(),
        PoolingMethod::Cls => tokens.cls.to_vec(),
        PoolingMethod::Dist => tokens.dist.to_vec(),
    };
    Ok(pooled)
}

/// Affine projection from pooled token space into the embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// `pooled_dim × embed_dim` weight matrix.
    pub weights: Matrix,
    /// `embed_dim` bias vector.
    pub bias: Vec<f64>,
}

impl ProjectionHead {
    /// Fresh head with Xavier-style normal weights (zero mean, variance
    /// `2 / (pooled_dim + embed_dim)`) and zero bias. Deterministic per seed.
    pub fn init(pooled_dim: usize, embed_dim: usize, seed: u64) -> Self {
        assert!(pooled_dim >= 1 && embed_dim >= 1, "dims must be >= 1");
        let std = math::sqrt(2.0 / (pooled_dim + embed_dim) as f64);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = (0..pooled_dim * embed_dim)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        ProjectionHead {
            weights: Matrix::from_vec(pooled_dim, embed_dim, data),
            bias: vec![0.0; embed_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `pooledᵀ·W + b`.
    pub fn project(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        if pooled.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: pooled.len(),
            });
        }
        let mut out = self.bias.clone();
        for (k, &u) in pooled.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let row = self.weights.row(k);
            for (o, w) in out.iter_mut().zip(row) {
                *o += u * w;
            }
        }
        Ok(out)
    }
}

/// `d × r` matrix of class proxies; column `j` is the proxy of class `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMatrix {
    mat: Matrix,
}

impl ProxyMatrix {
    /// One proxy per class, each drawn i.i.d. standard normal and normalized
    /// to the unit hypersphere. Deterministic per seed.
    pub fn init(num_proxies: usize, dim: usize, seed: u64) -> Self {
        assert!(num_proxies >= 1 && dim >= 1, "dims must be >= 1");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut mat = Matrix::zeros(dim, num_proxies);
        for j in 0..num_proxies {
            let col: Vec<f64> = (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = l2_norm(&col);
            // A standard normal draw of norm exactly 0 does not occur; guard anyway.
            let norm = if norm == 0.0 { 1.0 } else { norm };
            for (k, v) in col.iter().enumerate() {
                mat.set(k, j, v / norm);
            }
        }
        ProxyMatrix { mat }
    }

    pub fn from_matrix(mat: Matrix) -> Self {
        ProxyMatrix { mat }
    }

    /// Embedding dimension `d`.
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Number of proxies `r`.
    pub fn num_proxies(&self) -> usize {
        self.mat.cols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.mat.col(j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn as_matrix_mut(&mut self) -> &mut Matrix {
        &mut self.mat
    }
}

/// Backbone input geometry, used to validate feature exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Patch side length in pixels.
    pub patch: usize,
    /// Token width `D`.
    pub token_width: usize,
}

impl BackboneShape {
    /// DeiT-B defaults: 224×224 RGB input, 16-pixel patches, 768-wide tokens.
    pub fn deit_base() -> Self {
        BackboneShape {
            height: 224,
            width: 224,
            channels: 3,
            patch: 16,
            token_width: 768,
        }
    }
}

/// Input sequence length `N = H·W / patch²`.
pub fn patch_count(shape: &BackboneShape) -> Result<usize> {
    let hw = shape.height * shape.width;
    let p2 = shape.patch * shape.patch;
    if p2 == 0 || !hw.is_multiple_of(p2) {
        return Err(Error::NotDivisible {
            height: shape.height,
            width: shape.width,
            patch: shape.patch,
        });
    }
    Ok(hw / p2)
}

/// Pool and project every sample of a feature set; returns the `n × embed_dim`
/// embedding matrix.
///
/// Single-token sets only support CLS pooling; anything else would silently
/// read the aliased token.
pub fn embed_features(
    features: &TokenFeatureSet,
    head: &ProjectionHead,
    pooling: PoolingMethod,
) -> Result<Matrix> {
    if features.tokens_per_sample() == 1 && pooling != PoolingMethod::Cls {
        return Err(Error::InvalidConfig(
            "single-token feature sets support only CLS pooling",
        ));
    }
    if pooling.output_dim(features.token_width()) != head.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: head.input_dim(),
            actual: pooling.output_dim(features.token_width()),
        });
    }
    let mut out = Matrix::zeros(features.len(), head.output_dim());
    for i in 0..features.len() {
        let pooled = pool(features.token_pair(i), pooling)?;
        let emb = head.project(&pooled)?;
        out.row_mut(i).copy_from_slice(&emb);
    }
    Ok(out)
}
