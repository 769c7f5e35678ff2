//! Desk-scale synthetic stand-in for backbone feature exports.

use pirt_core::data::TokenFeatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Generate clustered CLS/DIST token features.
///
/// Class centers are drawn uniformly on the unit hypersphere in `R^D`. Each
/// sample adds independent Gaussian noise to the center, separately for the
/// CLS and DIST tokens. `cluster_spread` is the expected noise norm relative
/// to the unit-norm centers (per element the noise deviation is
/// `spread / √D`), so `spread = 0.15` means clusters whose radius is ~15% of
/// the center length. Values are quantized to single precision to match the
/// feature file payload exactly.
pub fn generate_synthetic(
    classes: usize,
    per_class: usize,
    token_width: usize,
    cluster_spread: f64,
    seed: u64,
) -> Result<TokenFeatureSet> {
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if per_class < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 samples per class".into(),
        ));
    }
    if token_width == 0 {
        return Err(Error::InvalidArgument("token width must be >= 1".into()));
    }
    if !cluster_spread.is_finite() || cluster_spread < 0.0 {
        return Err(Error::InvalidArgument(
            "cluster spread must be >= 0".into(),
        ));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sigma = cluster_spread / (token_width as f64).sqrt();

    let mut centers = Vec::with_capacity(classes);
    for _ in 0..classes {
        let c: Vec<f64> = (0..token_width)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        centers.push(c.into_iter().map(|v| v / norm).collect::<Vec<f64>>());
    }

    let n = classes * per_class;
    let mut labels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * 2 * token_width);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            labels.push(class as i64);
            for _token in 0..2 {
                for &c in center {
                    let v = c + sigma * rng.sample::<f64, _>(StandardNormal);
                    features.push(v as f32 as f64);
                }
            }
        }
    }
    Ok(TokenFeatureSet::new(token_width, 2, labels, features)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pirt_core::linalg::dot;

    #[test]
    fn zero_spread_collapses_each_class_onto_its_center() {
        let set = generate_synthetic(3, 4, 8, 0.0, 5).unwrap();
        for class in 0..3 {
            let base = set.cls(class * 4).to_vec();
            for k in 0..4 {
                assert_eq!(set.cls(class * 4 + k), &base[..]);
                assert_eq!(set.dist(class * 4 + k), &base[..]);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_set() {
        let a = generate_synthetic(4, 3, 16, 0.1, 99).unwrap();
        let b = generate_synthetic(4, 3, 16, 0.1, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(4, 3, 16, 0.1, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nearest_center_classifier_separates_tight_clusters() {
        let classes = 8;
        let per_class = 20;
        let set = generate_synthetic(classes, per_class, 32, 0.05, 7).unwrap();
        // Class centers recovered as per-class CLS means.
        let mut centers = vec![vec![0.0; 32]; classes];
        for i in 0..set.len() {
            let class = set.labels()[i] as usize;
            for (c, v) in centers[class].iter_mut().zip(set.cls(i)) {
                *c += v / per_class as f64;
            }
        }
        let mut correct = 0;
        for i in 0..set.len() {
            let x = set.cls(i);
            let best = (0..classes)
                .max_by(|&a, &b| {
                    dot(x, &centers[a])
                        .partial_cmp(&dot(x, &centers[b]))
                        .unwrap()
                })
                .unwrap();
            if best == set.labels()[i] as usize {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / set.len() as f64;
        assert!(accuracy > 0.99, "nearest-center accuracy {accuracy}");
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(generate_synthetic(1, 4, 8, 0.1, 0).is_err());
        assert!(generate_synthetic(3, 1, 8, 0.1, 0).is_err());
    }
}
