//! Central finite-difference validation of the analytic loss gradients.
//!
//! The numeric side differentiates only the loss *value*; the analytic
//! gradients are what is being checked. Relative error uses
//! `|analytic − numeric| / max(1, |analytic|)`, so near-zero components are
//! judged absolutely.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::head::ProxyMatrix;
use crate::linalg::{l2_norm, Matrix};
use crate::loss::{pirt_loss, proxy_anchor_loss, so_penalty, EmbeddingBatch, LossConfig};
use crate::math;

/// Central difference `(f(x+h) − f(x−h)) / 2h` for every coordinate.
pub fn central_diff<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for k in 0..x.len() {
        let orig = work[k];
        work[k] = orig + h;
        let plus = f(&work);
        work[k] = orig - h;
        let minus = f(&work);
        work[k] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| math::abs(a - n) / math::abs(a).max(1.0))
        .fold(0.0, f64::max)
}

/// Worst relative error of the proxy-anchor gradients (embeddings and
/// proxies) against central differences with step `h`.
pub fn proxy_anchor_grad_error(
    batch: &EmbeddingBatch,
    proxies: &ProxyMatrix,
    cfg: &LossConfig,
    h: f64,
) -> f64 {
    let out = proxy_anchor_loss(batch, proxies, cfg).expect("valid instance");
    let labels = batch.labels().to_vec();
    let (n, d) = (batch.len(), batch.dim());
    let fd_emb = central_diff(
        |x| {
            let b = EmbeddingBatch::new(Matrix::from_vec(n, d, x.to_vec()), labels.clone())
                .expect("shape preserved");
            proxy_anchor_loss(&b, proxies, cfg).expect("valid instance").value
        },
        batch.embeddings().data(),
        h,
    );
    let (pd, pr) = (proxies.dim(), proxies.num_proxies());
    let fd_prox = central_diff(
        |p| {
            let p = ProxyMatrix::from_matrix(Matrix::from_vec(pd, pr, p.to_vec()));
            proxy_anchor_loss(batch, &p, cfg).expect("valid instance").value
        },
        proxies.as_matrix().data(),
        h,
    );
    max_rel_error(out.grad_embeddings.data(), &fd_emb)
        .max(max_rel_error(out.grad_proxies.data(), &fd_prox))
}

/// Worst relative error of the soft-orthogonality gradient.
pub fn so_grad_error(proxies: &ProxyMatrix, h: f64) -> f64 {
    let out = so_penalty(proxies);
    let (pd, pr) = (proxies.dim(), proxies.num_proxies());
    let fd = central_diff(
        |p| so_penalty(&ProxyMatrix::from_matrix(Matrix::from_vec(pd, pr, p.to_vec()))).value,
        proxies.as_matrix().data(),
        h,
    );
    max_rel_error(out.grad_proxies.data(), &fd)
}

/// Worst relative error of the combined objective's gradients.
pub fn pirt_grad_error(
    batch: &EmbeddingBatch,
    proxies: &ProxyMatrix,
    cfg: &LossConfig,
    h: f64,
) -> f64 {
    let out = pirt_loss(batch, proxies, cfg).expect("valid instance");
    let labels = batch.labels().to_vec();
    let (n, d) = (batch.len(), batch.dim());
    let fd_emb = central_diff(
        |x| {
            let b = EmbeddingBatch::new(Matrix::from_vec(n, d, x.to_vec()), labels.clone())
                .expect("shape preserved");
            pirt_loss(&b, proxies, cfg).expect("valid instance").value
        },
        batch.embeddings().data(),
        h,
    );
    let (pd, pr) = (proxies.dim(), proxies.num_proxies());
    let fd_prox = central_diff(
        |p| {
            let p = ProxyMatrix::from_matrix(Matrix::from_vec(pd, pr, p.to_vec()));
            pirt_loss(batch, &p, cfg).expect("valid instance").value
        },
        proxies.as_matrix().data(),
        h,
    );
    max_rel_error(out.grad_embeddings.data(), &fd_emb)
        .max(max_rel_error(out.grad_proxies.data(), &fd_prox))
}

/// Sample a random instance with `n ≤ max_n`, `d ≤ max_d`, `r ≤ max_r`.
///
/// Rows and proxy columns are standard normal, resampled until their norm is
/// at least 0.5: tiny norms blow up the cosine curvature and the truncation
/// error of the finite difference with it, which would test the step size
/// rather than the gradient.
pub fn random_instance(
    rng: &mut ChaCha20Rng,
    max_n: usize,
    max_d: usize,
    max_r: usize,
) -> (EmbeddingBatch, ProxyMatrix) {
    let n = rng.random_range(2..=max_n);
    let d = rng.random_range(2..=max_d);
    let r = rng.random_range(1..=max_r);
    let mut sample_vec = |len: usize| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            if l2_norm(&v) >= 0.5 {
                return v;
            }
        }
    };
    let mut embeddings = Matrix::zeros(n, d);
    for i in 0..n {
        embeddings.row_mut(i).copy_from_slice(&sample_vec(d));
    }
    let mut proxies = Matrix::zeros(d, r);
    for j in 0..r {
        for (k, v) in sample_vec(d).iter().enumerate() {
            proxies.set(k, j, *v);
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..r)).collect();
    (
        EmbeddingBatch::new(embeddings, labels).expect("n >= 2"),
        ProxyMatrix::from_matrix(proxies),
    )
}

/// Aggregate outcome of the randomized gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSummary {
    pub instances: usize,
    pub max_err_proxy_anchor: f64,
    pub max_err_so: f64,
    pub max_err_pirt: f64,
}

impl GradCheckSummary {
    pub fn max_rel_error(&self) -> f64 {
        self.max_err_proxy_anchor
            .max(self.max_err_so)
            .max(self.max_err_pirt)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

/// Run the full randomized suite: `instances` random problems
/// (n ≤ 16, d ≤ 16, r ≤ 8) per loss, cycling the penalty weight through
/// 0, 0.001, 0.01, and 0.1.
pub fn check_loss_gradients(instances: usize, seed: u64, h: f64) -> GradCheckSummary {
    const LAMBDAS: [f64; 4] = [0.0, 0.001, 0.01, 0.1];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut summary = GradCheckSummary {
        instances,
        max_err_proxy_anchor: 0.0,
        max_err_so: 0.0,
        max_err_pirt: 0.0,
    };
    for k in 0..instances {
        let (batch, proxies) = random_instance(&mut rng, 16, 16, 8);
        let cfg = LossConfig {
            lambda: LAMBDAS[k % LAMBDAS.len()],
            ..LossConfig::default()
        };
        summary.max_err_proxy_anchor = summary
            .max_err_proxy_anchor
            .max(proxy_anchor_grad_error(&batch, &proxies, &cfg, h));
        summary.max_err_so = summary.max_err_so.max(so_grad_error(&proxies, h));
        summary.max_err_pirt = summary
            .max_err_pirt
            .max(pirt_grad_error(&batch, &proxies, &cfg, h));
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_diff_recovers_a_quadratic_gradient() {
        // f(x) = Σ i·x_i² has gradient 2·i·x_i.
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| i as f64 * v * v).sum();
        let x = [1.0, -2.0, 0.5];
        let g = central_diff(f, &x, 1e-5);
        let expect = [0.0, -4.0, 2.0];
        for (got, want) in g.iter().zip(expect) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn so_gradient_matches_finite_differences_tightly() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..5 {
            let (_, proxies) = random_instance(&mut rng, 2, 4, 3);
            assert!(so_grad_error(&proxies, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn proxy_anchor_gradient_matches_on_the_reference_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let n = 6;
        let d = 8;
        let r = 3;
        // Fixed-size variant of the random instance.
        let mut embeddings = Matrix::zeros(n, d);
        for i in 0..n {
            for k in 0..d {
                embeddings.set(i, k, rng.sample::<f64, _>(StandardNormal));
            }
        }
        let mut proxies = Matrix::zeros(d, r);
        for v in proxies.data_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let labels = (0..n).map(|_| rng.random_range(0..r)).collect();
        let batch = EmbeddingBatch::new(embeddings, labels).unwrap();
        let proxies = ProxyMatrix::from_matrix(proxies);
        let err = proxy_anchor_grad_error(&batch, &proxies, &LossConfig::default(), 1e-5);
        assert!(err < 1e-5, "max rel error {err}");
    }

    #[test]
    fn small_randomized_suite_passes() {
        let summary = check_loss_gradients(10, 123, 1e-5);
        assert!(summary.passed(1e-5), "{summary:?}");
    }
}
