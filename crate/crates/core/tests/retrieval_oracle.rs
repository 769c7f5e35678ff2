//! Brute-force equivalence of the retrieval metrics.
//!
//! The oracle below re-derives P@1 and MAP@R from their definitions with no
//! shared ranking code: similarities via plain loops, ordering via repeated
//! max-selection. The implementation must match it exactly on random
//! instances.

use pirt_core::eval::{evaluate, RetrievalIndex};
use pirt_core::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Rank references for one query by repeated max-selection (ties to the
/// smaller index), then walk the metric definitions.
#[allow(clippy::needless_range_loop)]
fn brute_metrics(
    refs: &Matrix,
    ref_labels: &[i64],
    queries: &Matrix,
    query_labels: &[i64],
    self_exclusion: bool,
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let q = queries.rows();
    let mut per_p1 = Vec::new();
    let mut per_map = Vec::new();
    for i in 0..q {
        let mut remaining: Vec<usize> = (0..refs.rows())
            .filter(|&j| !(self_exclusion && j == i))
            .collect();
        let mut ranking = Vec::with_capacity(remaining.len());
        while !remaining.is_empty() {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (slot, &j) in remaining.iter().enumerate() {
                let s = brute_cosine(queries.row(i), refs.row(j));
                if s > best_sim {
                    best_sim = s;
                    best = slot;
                }
            }
            ranking.push(remaining.remove(best));
        }

        per_p1.push(if ref_labels[ranking[0]] == query_labels[i] {
            1.0
        } else {
            0.0
        });

        let r_count = ranking
            .iter()
            .filter(|&&j| ref_labels[j] == query_labels[i])
            .count();
        let mut correct = 0;
        let mut ap = 0.0;
        for rank in 1..=r_count {
            if ref_labels[ranking[rank - 1]] == query_labels[i] {
                correct += 1;
                ap += correct as f64 / rank as f64;
            }
        }
        per_map.push(ap / r_count as f64);
    }
    let p1 = per_p1.iter().sum::<f64>() / q as f64;
    let map = per_map.iter().sum::<f64>() / q as f64;
    (p1, map, per_p1, per_map)
}

/// Labels where every class has at least two members, so R >= 1 holds for
/// every query even under self-exclusion.
fn labels_with_pairs(rng: &mut ChaCha20Rng, n: usize, classes: usize) -> Vec<i64> {
    let mut labels: Vec<i64> = Vec::with_capacity(n);
    for c in 0..classes {
        labels.push(c as i64);
        labels.push(c as i64);
    }
    while labels.len() < n {
        labels.push(rng.random_range(0..classes) as i64);
    }
    // Fisher-Yates over the label vector keeps the pair guarantee.
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

fn random_embeddings(rng: &mut ChaCha20Rng, n: usize, d: usize) -> Matrix {
    let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(n, d, data)
}

#[test]
fn metrics_match_brute_force_on_200_random_instances() {
    let mut rng = ChaCha20Rng::seed_from_u64(31337);
    for instance in 0..200 {
        let d = rng.random_range(2..=8);
        let classes = rng.random_range(1..=5);
        let self_indexed = instance % 2 == 0;

        let (index, refs, ref_labels, queries, query_labels, self_ex) = if self_indexed {
            let m = rng.random_range((2 * classes).max(2)..=50);
            let labels = labels_with_pairs(&mut rng, m, classes);
            let emb = random_embeddings(&mut rng, m, d);
            let index = RetrievalIndex::self_indexed(emb.clone(), labels.clone()).unwrap();
            (index, emb.clone(), labels.clone(), emb, labels, true)
        } else {
            let m = rng.random_range(classes.max(2)..=50);
            let q = rng.random_range(1..=50);
            let mut ref_labels: Vec<i64> = (0..classes as i64).collect();
            while ref_labels.len() < m {
                ref_labels.push(rng.random_range(0..classes) as i64);
            }
            let query_labels: Vec<i64> = (0..q)
                .map(|_| rng.random_range(0..classes) as i64)
                .collect();
            let refs = random_embeddings(&mut rng, m, d);
            let queries = random_embeddings(&mut rng, q, d);
            let index = RetrievalIndex::new(
                refs.clone(),
                ref_labels.clone(),
                queries.clone(),
                query_labels.clone(),
            )
            .unwrap();
            (index, refs, ref_labels, queries, query_labels, false)
        };

        let report = evaluate(&index).unwrap();
        let (p1, map, per_p1, per_map) =
            brute_metrics(&refs, &ref_labels, &queries, &query_labels, self_ex);
        assert_eq!(report.p_at_1, p1, "P@1 mismatch on instance {instance}");
        assert_eq!(report.map_at_r, map, "MAP@R mismatch on instance {instance}");
        assert_eq!(report.per_query_p_at_1, per_p1);
        assert_eq!(report.per_query_map_at_r, per_map);
    }
}

#[test]
fn metrics_are_invariant_to_positive_per_vector_rescaling() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for _ in 0..20 {
        let classes = 3;
        let m = rng.random_range(8..=30);
        let labels = labels_with_pairs(&mut rng, m, classes);
        let emb = random_embeddings(&mut rng, m, 5);

        let mut scaled = emb.clone();
        for i in 0..m {
            let factor: f64 = rng.random_range(0.05..20.0);
            for v in scaled.row_mut(i) {
                *v *= factor;
            }
        }

        let base = evaluate(&RetrievalIndex::self_indexed(emb, labels.clone()).unwrap()).unwrap();
        let resc = evaluate(&RetrievalIndex::self_indexed(scaled, labels).unwrap()).unwrap();
        assert_eq!(base.p_at_1, resc.p_at_1);
        assert_eq!(base.map_at_r, resc.map_at_r);
    }
}
