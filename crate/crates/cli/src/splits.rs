//! Split manifests: which classes train, and what gets retrieved against
//! what at evaluation time.
//!
//! JSON schema:
//!
//! ```json
//! {
//!   "train_classes": [0, 1, 2],
//!   "test_classes": [3, 4],
//!   "query_samples": [120, 121],
//!   "gallery_samples": [130, 131, 132]
//! }
//! ```
//!
//! Class-level fields drive the category-retrieval protocol (train and test
//! classes must be disjoint; the test classes serve as both query and gallery
//! with self-exclusion). The optional sample lists override the evaluation
//! side for query/gallery-style protocols: identical lists mean one
//! self-excluded set, disjoint lists mean separate query and gallery sets.

use std::fs;
use std::path::Path;

use pirt_core::data::TokenFeatureSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct SplitManifest {
    /// Classes whose samples train; empty means every class trains.
    #[serde(default)]
    pub train_classes: Vec<i64>,
    /// Classes evaluated; empty means every class is evaluated.
    #[serde(default)]
    pub test_classes: Vec<i64>,
    /// Optional explicit query sample indices (into the feature file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_samples: Option<Vec<usize>>,
    /// Optional explicit gallery sample indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery_samples: Option<Vec<usize>>,
}

/// How the evaluation index should be assembled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalPlan {
    /// One sample set, queried against itself with self-exclusion.
    SelfIndexed { samples: Vec<usize> },
    /// Disjoint query and gallery sets.
    QueryGallery {
        query: Vec<usize>,
        gallery: Vec<usize>,
    },
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for class in &self.train_classes {
            if self.test_classes.contains(class) {
                return Err(Error::InvalidSplits(format!(
                    "class {class} appears in both train and test"
                )));
            }
        }
        match (&self.query_samples, &self.gallery_samples) {
            (None, None) => {}
            (Some(q), Some(g)) => {
                if q.is_empty() || g.is_empty() {
                    return Err(Error::InvalidSplits(
                        "query/gallery sample lists must be nonempty".into(),
                    ));
                }
                let identical = q == g;
                let overlapping = q.iter().any(|i| g.contains(i));
                if overlapping && !identical {
                    return Err(Error::InvalidSplits(
                        "query and gallery samples must be identical or disjoint".into(),
                    ));
                }
            }
            _ => {
                return Err(Error::InvalidSplits(
                    "query_samples and gallery_samples must be given together".into(),
                ))
            }
        }
        Ok(())
    }

    /// Indices of the samples this manifest trains on.
    pub fn train_indices(&self, features: &TokenFeatureSet) -> Vec<usize> {
        (0..features.len())
            .filter(|&i| {
                self.train_classes.is_empty()
                    || self.train_classes.contains(&features.labels()[i])
            })
            .collect()
    }

    /// The evaluation plan for this manifest.
    pub fn eval_plan(&self, features: &TokenFeatureSet) -> Result<EvalPlan> {
        if let (Some(q), Some(g)) = (&self.query_samples, &self.gallery_samples) {
            for &i in q.iter().chain(g) {
                if i >= features.len() {
                    return Err(Error::InvalidSplits(format!(
                        "sample index {i} out of range ({} samples)",
                        features.len()
                    )));
                }
            }
            return Ok(if q == g {
                EvalPlan::SelfIndexed { samples: q.clone() }
            } else {
                EvalPlan::QueryGallery {
                    query: q.clone(),
                    gallery: g.clone(),
                }
            });
        }
        let samples: Vec<usize> = (0..features.len())
            .filter(|&i| {
                self.test_classes.is_empty() || self.test_classes.contains(&features.labels()[i])
            })
            .collect();
        if samples.is_empty() {
            return Err(Error::InvalidSplits(
                "no samples match the test classes".into(),
            ));
        }
        Ok(EvalPlan::SelfIndexed { samples })
    }
}

/// Deterministic per-class sample holdout used when no manifest is given:
/// roughly every fourth sample of each class (at least two, so self-excluded
/// retrieval stays well defined) goes to evaluation, the rest train. Classes
/// with fewer than four samples stay entirely in the training split.
pub fn per_class_holdout(labels: &[i64]) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut eval = Vec::new();
    let mut train = Vec::new();
    for class in classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let held = if members.len() >= 4 {
            (members.len() / 4).max(2)
        } else {
            0
        };
        let split = members.len() - held;
        train.extend_from_slice(&members[..split]);
        eval.extend_from_slice(&members[split..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}
