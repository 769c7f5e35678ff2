//! Deterministic per-epoch mini-batch index sampler.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Shuffle `0..num_samples` (seeded by `seed + epoch`) and split into
/// consecutive batches of `batch_size`.
///
/// A final short batch is kept when it holds at least two samples and dropped
/// when it would be a singleton. Positive coverage needs no care: any
/// nonempty batch has at least one positive proxy, because every sample is
/// positive for its own class.
pub fn sample_batches(
    num_samples: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size > num_samples {
        return Err(Error::BatchTooLarge {
            batch_size,
            num_samples,
        });
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
    let mut indices: Vec<usize> = (0..num_samples).collect();
    indices.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = indices
        .chunks(batch_size)
        .map(|chunk| chunk.to_vec())
        .collect();
    if let Some(last) = batches.last() {
        if last.len() < 2 {
            batches.pop();
        }
    }
    Ok(batches)
}
