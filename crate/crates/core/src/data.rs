//! In-memory token feature sets.
//!
//! A [`TokenFeatureSet`] holds per-sample token states exported from a frozen
//! backbone: either a CLS/DIST pair (`tokens_per_sample = 2`) or a single
//! generic token (`tokens_per_sample = 1`, pooling restricted to CLS). Values
//! are stored widened to `f64`; file formats keep single precision, so a
//! widened value round-trips exactly.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::TokenPair;

/// Per-sample token features plus integer class labels.
///
/// Layout of `features`: sample-major, then token (CLS before DIST), then
/// dimension — `features[(i * tokens_per_sample + t) * width + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatureSet {
    token_width: usize,
    tokens_per_sample: usize,
    labels: Vec<i64>,
    features: Vec<f64>,
}

impl TokenFeatureSet {
    pub fn new(
        token_width: usize,
        tokens_per_sample: usize,
        labels: Vec<i64>,
        features: Vec<f64>,
    ) -> Result<Self> {
        if token_width == 0 {
            return Err(Error::InvalidConfig("token width must be >= 1"));
        }
        if !(1..=2).contains(&tokens_per_sample) {
            return Err(Error::InvalidConfig("tokens_per_sample must be 1 or 2"));
        }
        if labels.is_empty() {
            return Err(Error::InvalidConfig("feature set must hold >= 1 sample"));
        }
        if labels.iter().any(|&l| l < 0) {
            return Err(Error::InvalidConfig("labels must be >= 0"));
        }
        let expected = labels.len() * tokens_per_sample * token_width;
        if features.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: features.len(),
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("token features"));
        }
        Ok(TokenFeatureSet {
            token_width,
            tokens_per_sample,
            labels,
            features,
        })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn token_width(&self) -> usize {
        self.token_width
    }

    pub fn tokens_per_sample(&self) -> usize {
        self.tokens_per_sample
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    fn token(&self, sample: usize, token: usize) -> &[f64] {
        let start = (sample * self.tokens_per_sample + token) * self.token_width;
        &self.features[start..start + self.token_width]
    }

    /// CLS token state of sample `i`.
    pub fn cls(&self, i: usize) -> &[f64] {
        self.token(i, 0)
    }

    /// DIST token state of sample `i`. For single-token sets this aliases the
    /// CLS token; pooling is restricted to CLS there, so it is never read.
    pub fn dist(&self, i: usize) -> &[f64] {
        if self.tokens_per_sample == 2 {
            self.token(i, 1)
        } else {
            self.token(i, 0)
        }
    }

    pub fn token_pair(&self, i: usize) -> TokenPair<'_> {
        TokenPair {
            cls: self.cls(i),
            dist: self.dist(i),
        }
    }

    /// New set holding the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut labels = Vec::with_capacity(indices.len());
        let mut features =
            Vec::with_capacity(indices.len() * self.tokens_per_sample * self.token_width);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::LabelOutOfRange {
                    label: i,
                    num_proxies: self.len(),
                });
            }
            labels.push(self.labels[i]);
            let start = i * self.tokens_per_sample * self.token_width;
            let end = start + self.tokens_per_sample * self.token_width;
            features.extend_from_slice(&self.features[start..end]);
        }
        TokenFeatureSet::new(self.token_width, self.tokens_per_sample, labels, features)
    }
}

/// Map raw class labels to dense proxy indices.
///
/// Returns the sorted distinct class IDs and, per sample, the index of its
/// class in that list. Proxy column `j` then represents `class_ids[j]`.
pub fn dense_class_index(labels: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let mut class_ids: Vec<i64> = labels.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    let dense = labels
        .iter()
        .map(|l| class_ids.binary_search(l).expect("label present"))
        .collect();
    (class_ids, dense)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny_set() -> TokenFeatureSet {
        // 2 samples, width 2, CLS+DIST.
        TokenFeatureSet::new(
            2,
            2,
            vec![5, 3],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        )
        .unwrap()
    }

    #[test]
    fn token_layout_is_sample_major_cls_first() {
        let s = tiny_set();
        assert_eq!(s.cls(0), &[1.0, 2.0]);
        assert_eq!(s.dist(0), &[3.0, 4.0]);
        assert_eq!(s.cls(1), &[5.0, 6.0]);
        assert_eq!(s.dist(1), &[7.0, 8.0]);
    }

    #[test]
    fn single_token_dist_aliases_cls() {
        let s = TokenFeatureSet::new(2, 1, vec![0], vec![1.0, 2.0]).unwrap();
        assert_eq!(s.dist(0), s.cls(0));
    }

    #[test]
    fn rejects_non_finite_and_negative_labels() {
        assert_eq!(
            TokenFeatureSet::new(1, 1, vec![0], vec![f64::NAN]),
            Err(Error::NonFinite("token features"))
        );
        assert!(TokenFeatureSet::new(1, 1, vec![-1], vec![0.0]).is_err());
    }

    #[test]
    fn subset_keeps_order_and_payload() {
        let s = tiny_set();
        let sub = s.subset(&[1]).unwrap();
        assert_eq!(sub.labels(), &[3]);
        assert_eq!(sub.cls(0), &[5.0, 6.0]);
        assert!(s.subset(&[2]).is_err());
    }

    #[test]
    fn dense_index_sorts_and_dedups() {
        let (ids, dense) = dense_class_index(&[7, 3, 7, 10, 3]);
        assert_eq!(ids, vec![3, 7, 10]);
        assert_eq!(dense, vec![1, 0, 1, 2, 0]);
    }
}
