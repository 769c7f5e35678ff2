//! Proxy-anchor loss, soft-orthogonality penalty, and the combined objective.
//!
//! For a batch 𝒳 with per-proxy positive/negative splits 𝒳ₚ⁺ / 𝒳ₚ⁻ and the
//! set 𝒫⁺ of proxies with at least one positive in the batch, the
//! proxy-anchor loss is
//!
//! ```text
//! L = (1/|𝒫⁺|) Σ_{p∈𝒫⁺} log(1 + Σ_{x∈𝒳ₚ⁺} exp(-α(s(x,p) - δ)))
//!   + (1/|𝒫|)  Σ_{p∈𝒫}  log(1 + Σ_{x∈𝒳ₚ⁻} exp( α(s(x,p) + δ)))
//! ```
//!
//! with `s` the cosine similarity. The soft-orthogonality penalty is
//! `‖PᵀP − I_r‖_F²` over the proxy matrix, with gradient `4·P·(PᵀP − I_r)`;
//! the combined objective adds it with weight `λ`.
//!
//! Gradients are exact closed forms differentiated through the cosine, not
//! autodiff; [`crate::gradcheck`] holds the finite-difference harness that
//! arbitrates them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::ProxyMatrix;
use crate::linalg::{frobenius_sq, gram_matrix, l2_norm, Matrix};
use crate::math;

/// Scaling factor α, margin δ, and penalty weight λ.
///
/// `lambda = 0` disables the orthogonality term and reduces the combined
/// objective to the plain proxy-anchor loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 32.0,
            delta: 0.1,
            lambda: 0.001,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidConfig("alpha must be > 0"));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(Error::InvalidConfig("delta must be > 0"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be >= 0"));
        }
        Ok(())
    }
}

/// A mini-batch of embeddings (row per sample) with dense proxy labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    embeddings: Matrix,
    labels: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(embeddings: Matrix, labels: Vec<usize>) -> Result<Self> {
        if embeddings.rows() == 0 {
            return Err(Error::InvalidConfig("batch must hold >= 1 sample"));
        }
        if labels.len() != embeddings.rows() {
            return Err(Error::DimensionMismatch {
                expected: embeddings.rows(),
                actual: labels.len(),
            });
        }
        Ok(EmbeddingBatch { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Loss value with gradients for both parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// `n × d`, row per batch sample.
    pub grad_embeddings: Matrix,
    /// `d × r`, column per proxy.
    pub grad_proxies: Matrix,
}

/// Soft-orthogonality value and its gradient w.r.t. the proxy matrix. The
/// penalty does not involve embeddings, so there is no embedding gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SoPenalty {
    pub value: f64,
    /// `d × r`.
    pub grad_proxies: Matrix,
}

/// Per-proxy positive/negative index sets over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// `positives[p]`: batch indices labeled `p`.
    pub positives: Vec<Vec<usize>>,
    /// `negatives[p]`: every other batch index.
    pub negatives: Vec<Vec<usize>>,
    /// 𝒫⁺: proxies with at least one positive, ascending.
    pub active: Vec<usize>,
}

/// Split a batch into per-proxy positive and negative sets.
pub fn partition_sets(labels: &[usize], num_proxies: usize) -> Result<Partition> {
    for &label in labels {
        if label >= num_proxies {
            return Err(Error::LabelOutOfRange {
                label,
                num_proxies,
            });
        }
    }
    let mut positives = vec![Vec::new(); num_proxies];
    let mut negatives = vec![Vec::new(); num_proxies];
    for (i, &label) in labels.iter().enumerate() {
        for p in 0..num_proxies {
            if p == label {
                positives[p].push(i);
            } else {
                negatives[p].push(i);
            }
        }
    }
    let active = (0..num_proxies)
        .filter(|&p| !positives[p].is_empty())
        .collect();
    Ok(Partition {
        positives,
        negatives,
        active,
    })
}

/// Sum in ascending order of value. Makes the reduction independent of batch
/// order (bit-stable under sample permutation) and accumulates small terms
/// first.
fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite exp terms"));
    terms.iter().sum()
}

/// Proxy-anchor loss with exact gradients w.r.t. embeddings and proxies.
pub fn proxy_anchor_loss(
    batch: &EmbeddingBatch,
    proxies: &ProxyMatrix,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let n = batch.len();
    let d = batch.dim();
    let r = proxies.num_proxies();
    if proxies.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: proxies.dim(),
        });
    }

    let partition = partition_sets(batch.labels(), r)?;
    if partition.active.is_empty() {
        // Unreachable through a validly constructed batch (every sample makes
        // its own proxy positive) but the first average is undefined then.
        return Err(Error::EmptyPositiveSet);
    }

    // Unit-direction caches; zero embeddings or proxies have no direction.
    let mut x_norms = vec![0.0; n];
    let mut x_hat = Matrix::zeros(n, d);
    for i in 0..n {
        let norm = l2_norm(batch.embeddings().row(i));
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        x_norms[i] = norm;
        for k in 0..d {
            x_hat.set(i, k, batch.embeddings().at(i, k) / norm);
        }
    }
    let mut p_norms = vec![0.0; r];
    let mut p_hat = Matrix::zeros(d, r);
    for j in 0..r {
        let norm = proxies.as_matrix().col_norm(j);
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        p_norms[j] = norm;
        for k in 0..d {
            p_hat.set(k, j, proxies.as_matrix().at(k, j) / norm);
        }
    }

    // Cosine similarities and the exponential pull/push weights.
    let sim = {
        let mut sim = x_hat.matmul(&p_hat)?;
        for s in sim.data_mut() {
            *s = s.clamp(-1.0, 1.0);
        }
        sim
    };
    let mut weights = Matrix::zeros(n, r);
    for i in 0..n {
        for j in 0..r {
            let s = sim.at(i, j);
            let w = if batch.labels()[i] == j {
                math::exp(-cfg.alpha * (s - cfg.delta))
            } else {
                math::exp(cfg.alpha * (s + cfg.delta))
            };
            weights.set(i, j, w);
        }
    }

    let mut pos_sums = vec![0.0; r];
    let mut neg_sums = vec![0.0; r];
    for j in 0..r {
        let mut pos: Vec<f64> = partition.positives[j]
            .iter()
            .map(|&i| weights.at(i, j))
            .collect();
        let mut neg: Vec<f64> = partition.negatives[j]
            .iter()
            .map(|&i| weights.at(i, j))
            .collect();
        pos_sums[j] = ordered_sum(&mut pos);
        neg_sums[j] = ordered_sum(&mut neg);
    }

    let inv_active = 1.0 / partition.active.len() as f64;
    let inv_all = 1.0 / r as f64;
    let mut value = 0.0;
    for &j in &partition.active {
        value += inv_active * math::ln_1p(pos_sums[j]);
    }
    for j in 0..r {
        value += inv_all * math::ln_1p(neg_sums[j]);
    }

    // dL/ds(x_i, p_j), then the chain rule through the cosine:
    //   ds/dx = (p̂ − s·x̂)/‖x‖,  ds/dp = (x̂ − s·p̂)/‖p‖.
    let mut grad_embeddings = Matrix::zeros(n, d);
    let mut grad_proxies = Matrix::zeros(d, r);
    for i in 0..n {
        for j in 0..r {
            let coeff = if batch.labels()[i] == j {
                inv_active * (-cfg.alpha * weights.at(i, j)) / (1.0 + pos_sums[j])
            } else {
                inv_all * (cfg.alpha * weights.at(i, j)) / (1.0 + neg_sums[j])
            };
            let s = sim.at(i, j);
            let cx = coeff / x_norms[i];
            let cp = coeff / p_norms[j];
            for k in 0..d {
                let xh = x_hat.at(i, k);
                let ph = p_hat.at(k, j);
                grad_embeddings.set(i, k, grad_embeddings.at(i, k) + cx * (ph - s * xh));
                grad_proxies.set(k, j, grad_proxies.at(k, j) + cp * (xh - s * ph));
            }
        }
    }

    Ok(LossOutput {
        value,
        grad_embeddings,
        grad_proxies,
    })
}

/// Soft-orthogonality penalty `‖PᵀP − I_r‖_F²` with gradient
/// `4·P·(PᵀP − I_r)`.
pub fn so_penalty(proxies: &ProxyMatrix) -> SoPenalty {
    let r = proxies.num_proxies();
    let mut gram = gram_matrix(proxies.as_matrix());
    for j in 0..r {
        gram.set(j, j, gram.at(j, j) - 1.0);
    }
    let value = frobenius_sq(&gram);
    let mut grad = proxies
        .as_matrix()
        .matmul(&gram)
        .expect("gram is r x r by construction");
    for g in grad.data_mut() {
        *g *= 4.0;
    }
    SoPenalty {
        value,
        grad_proxies: grad,
    }
}

/// Combined objective: proxy-anchor plus `λ` times the soft-orthogonality
/// penalty, gradients added accordingly.
pub fn pirt_loss(
    batch: &EmbeddingBatch,
    proxies: &ProxyMatrix,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    let mut out = proxy_anchor_loss(batch, proxies, cfg)?;
    if cfg.lambda != 0.0 {
        let so = so_penalty(proxies);
        out.value += cfg.lambda * so.value;
        out.grad_proxies.add_scaled(&so.grad_proxies, cfg.lambda)?;
    }
    Ok(out)
}
