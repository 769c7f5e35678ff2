//! Randomized finite-difference validation of every analytic gradient,
//! including the backpropagation through the projection head.

use pirt_core::gradcheck::{
    central_diff, check_loss_gradients, pirt_grad_error, proxy_anchor_grad_error, random_instance,
    so_grad_error,
};
use pirt_core::head::{pool, PoolingMethod, ProjectionHead, ProxyMatrix};
use pirt_core::linalg::Matrix;
use pirt_core::loss::{pirt_loss, EmbeddingBatch, LossConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;

#[test]
fn randomized_suite_of_100_instances_stays_within_tolerance() {
    let summary = check_loss_gradients(100, 20240, H);
    assert!(
        summary.passed(1e-5),
        "max rel errors: pa {:.3e}, so {:.3e}, combined {:.3e}",
        summary.max_err_proxy_anchor,
        summary.max_err_so,
        summary.max_err_pirt
    );
}

#[test]
fn per_loss_errors_on_reference_sizes() {
    let mut rng = ChaCha20Rng::seed_from_u64(5150);
    for _ in 0..20 {
        let (batch, proxies) = random_instance(&mut rng, 8, 8, 4);
        let cfg = LossConfig::default();
        assert!(proxy_anchor_grad_error(&batch, &proxies, &cfg, H) < 1e-5);
        assert!(so_grad_error(&proxies, H) < 1e-6);
        assert!(pirt_grad_error(&batch, &proxies, &cfg, H) < 1e-5);
    }
}

// The trainer chains the loss gradient through E = U·W + b. Check dW and db
// numerically on a small head so the wiring (transpose products, bias sums)
// is covered, not just the loss itself.
#[test]
fn projection_backprop_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(777);
    let n = 5;
    let token_width = 3;
    let pooled_dim = 6; // concat
    let embed_dim = 4;
    let r = 3;

    let cls: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..token_width).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..token_width).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..r)).collect();
    let proxies = {
        let data: Vec<f64> = (0..embed_dim * r).map(|_| rng.sample(StandardNormal)).collect();
        ProxyMatrix::from_matrix(Matrix::from_vec(embed_dim, r, data))
    };
    let head = ProjectionHead::init(pooled_dim, embed_dim, 42);
    let cfg = LossConfig::default();

    let mut pooled = Matrix::zeros(n, pooled_dim);
    for i in 0..n {
        let p = pool(
            pirt_core::head::TokenPair {
                cls: &cls[i],
                dist: &dist[i],
            },
            PoolingMethod::Concat,
        )
        .unwrap();
        pooled.row_mut(i).copy_from_slice(&p);
    }

    let loss_of = |weights: &[f64], bias: &[f64]| -> f64 {
        let w = Matrix::from_vec(pooled_dim, embed_dim, weights.to_vec());
        let mut e = pooled.matmul(&w).unwrap();
        for row in 0..n {
            for (v, b) in e.row_mut(row).iter_mut().zip(bias) {
                *v += b;
            }
        }
        let batch = EmbeddingBatch::new(e, labels.clone()).unwrap();
        pirt_loss(&batch, &proxies, &cfg).unwrap().value
    };

    // Analytic: dW = Uᵀ·G, db = column sums of G.
    let embeddings = {
        let mut e = pooled.matmul(&head.weights).unwrap();
        for row in 0..n {
            for (v, b) in e.row_mut(row).iter_mut().zip(&head.bias) {
                *v += b;
            }
        }
        e
    };
    let batch = EmbeddingBatch::new(embeddings, labels.clone()).unwrap();
    let out = pirt_loss(&batch, &proxies, &cfg).unwrap();
    let grad_w = pooled.transpose_matmul(&out.grad_embeddings).unwrap();
    let mut grad_b = vec![0.0; embed_dim];
    for row in 0..n {
        for (gb, g) in grad_b.iter_mut().zip(out.grad_embeddings.row(row)) {
            *gb += g;
        }
    }

    let fd_w = central_diff(
        |w| loss_of(w, &head.bias),
        head.weights.data(),
        H,
    );
    for (a, fd) in grad_w.data().iter().zip(&fd_w) {
        assert!((a - fd).abs() / a.abs().max(1.0) < 1e-5, "dW {a} vs {fd}");
    }
    let fd_b = central_diff(|b| loss_of(head.weights.data(), b), &head.bias, H);
    for (a, fd) in grad_b.iter().zip(&fd_b) {
        assert!((a - fd).abs() / a.abs().max(1.0) < 1e-5, "db {a} vs {fd}");
    }
}
