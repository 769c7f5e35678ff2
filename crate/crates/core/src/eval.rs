//! Retrieval evaluation: exact cosine nearest-neighbor ranking, P@1, MAP@R,
//! and proxy-geometry diagnostics.
//!
//! MAP@R for one query uses R = number of same-class references (the query
//! itself excluded when queries and references are the same set) and counts
//! precision as zero at ranks whose result is wrong:
//! `MAP@R = (1/R) Σ_{i=1..R} P(i)`, `P(i) = (correct in top i)/i` if the
//! `i`-th result is same-class, else 0.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::ProxyMatrix;
use crate::linalg::{cosine_similarity, l2_norm, Matrix};
use crate::loss::so_penalty;
use crate::math;

/// Query and reference embeddings with labels.
///
/// `self_exclusion` marks the case where both sets are the same collection, so
/// query `i` must not retrieve reference `i`.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    references: Matrix,
    reference_labels: Vec<i64>,
    queries: Matrix,
    query_labels: Vec<i64>,
    self_exclusion: bool,
}

impl RetrievalIndex {
    /// Disjoint query and gallery sets (In-Shop style).
    pub fn new(
        references: Matrix,
        reference_labels: Vec<i64>,
        queries: Matrix,
        query_labels: Vec<i64>,
    ) -> Result<Self> {
        if reference_labels.len() != references.rows() {
            return Err(Error::DimensionMismatch {
                expected: references.rows(),
                actual: reference_labels.len(),
            });
        }
        if query_labels.len() != queries.rows() {
            return Err(Error::DimensionMismatch {
                expected: queries.rows(),
                actual: query_labels.len(),
            });
        }
        if references.cols() != queries.cols() {
            return Err(Error::DimensionMismatch {
                expected: references.cols(),
                actual: queries.cols(),
            });
        }
        Ok(RetrievalIndex {
            references,
            reference_labels,
            queries,
            query_labels,
            self_exclusion: false,
        })
    }

    /// One set serving as both query and gallery with self-exclusion
    /// (CUB/Cars/SOP style).
    pub fn self_indexed(embeddings: Matrix, labels: Vec<i64>) -> Result<Self> {
        let mut index = RetrievalIndex::new(embeddings.clone(), labels.clone(), embeddings, labels)?;
        index.self_exclusion = true;
        Ok(index)
    }

    pub fn num_queries(&self) -> usize {
        self.queries.rows()
    }

    pub fn num_references(&self) -> usize {
        self.references.rows()
    }

    pub fn self_exclusion(&self) -> bool {
        self.self_exclusion
    }
}

/// Reference indices ordered by descending cosine similarity to query
/// `query_i`; ties broken by ascending reference index. With self-exclusion
/// the query's own row is absent.
pub fn rank_neighbors(index: &RetrievalIndex, query_i: usize) -> Result<Vec<usize>> {
    let query = index.queries.row(query_i);
    if l2_norm(query) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(index.num_references());
    for j in 0..index.num_references() {
        if index.self_exclusion && j == query_i {
            continue;
        }
        scored.push((j, cosine_similarity(query, index.references.row(j))?));
    }
    scored.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine similarities are finite")
            .then(a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().map(|(j, _)| j).collect())
}

/// Aggregate retrieval quality with the per-query values it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub p_at_1: f64,
    pub map_at_r: f64,
    pub per_query_p_at_1: Vec<f64>,
    pub per_query_map_at_r: Vec<f64>,
}

/// Evaluate P@1 and MAP@R over every query.
pub fn evaluate(index: &RetrievalIndex) -> Result<MetricReport> {
    let q = index.num_queries();
    let mut per_p1 = Vec::with_capacity(q);
    let mut per_map = Vec::with_capacity(q);
    for i in 0..q {
        let ranking = rank_neighbors(index, i)?;
        if ranking.is_empty() {
            return Err(Error::NoEligibleReference { query: i });
        }
        let label = index.query_labels[i];
        per_p1.push(if index.reference_labels[ranking[0]] == label {
            1.0
        } else {
            0.0
        });

        let relevant = ranking
            .iter()
            .filter(|&&j| index.reference_labels[j] == label)
            .count();
        if relevant == 0 {
            return Err(Error::NoRelevantReference { query: i });
        }
        let mut correct = 0usize;
        let mut precision_sum = 0.0;
        for (rank0, &j) in ranking.iter().take(relevant).enumerate() {
            if index.reference_labels[j] == label {
                correct += 1;
                precision_sum += correct as f64 / (rank0 + 1) as f64;
            }
        }
        per_map.push(precision_sum / relevant as f64);
    }
    let p_at_1 = per_p1.iter().sum::<f64>() / q as f64;
    let map_at_r = per_map.iter().sum::<f64>() / q as f64;
    Ok(MetricReport {
        p_at_1,
        map_at_r,
        per_query_p_at_1: per_p1,
        per_query_map_at_r: per_map,
    })
}

/// Fraction of queries whose top-1 neighbor shares the query's label.
pub fn precision_at_1(index: &RetrievalIndex) -> Result<f64> {
    Ok(evaluate(index)?.p_at_1)
}

/// Mean over queries of average precision truncated at R.
pub fn map_at_r(index: &RetrievalIndex) -> Result<f64> {
    Ok(evaluate(index)?.map_at_r)
}

/// Geometry diagnostics of a proxy matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyStats {
    pub so_penalty: f64,
    /// Largest |cosine| between distinct proxies; 1 means a duplicated
    /// direction, 0 means fully orthogonal.
    pub max_offdiag_cosine: f64,
    /// Mean |cosine| over unordered distinct pairs.
    pub mean_offdiag_cosine: f64,
    pub min_col_norm: f64,
    pub max_col_norm: f64,
}

pub fn proxy_stats(proxies: &ProxyMatrix) -> Result<ProxyStats> {
    let r = proxies.num_proxies();
    let columns: Vec<Vec<f64>> = (0..r).map(|j| proxies.column(j)).collect();
    let mut min_norm = f64::INFINITY;
    let mut max_norm: f64 = 0.0;
    for col in &columns {
        let norm = l2_norm(col);
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        min_norm = min_norm.min(norm);
        max_norm = max_norm.max(norm);
    }
    let mut max_cos: f64 = 0.0;
    let mut cos_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..r {
        for j in i + 1..r {
            let c = math::abs(cosine_similarity(&columns[i], &columns[j])?);
            max_cos = max_cos.max(c);
            cos_sum += c;
            pairs += 1;
        }
    }
    Ok(ProxyStats {
        so_penalty: so_penalty(proxies).value,
        max_offdiag_cosine: max_cos,
        mean_offdiag_cosine: if pairs > 0 { cos_sum / pairs as f64 } else { 0.0 },
        min_col_norm: min_norm,
        max_col_norm: max_norm,
    })
}
