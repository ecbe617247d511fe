use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::records::ValidRecord;
use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// Train/test partition of record indices into fixed-size shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub train_shards: Vec<Vec<usize>>,
    pub test_shards: Vec<Vec<usize>>,
    pub shard_size_train: usize,
    pub shard_size_test: usize,
    pub split_ratio: f64,
    /// True when the last train shard holds fewer than `shard_size_train` records.
    pub train_last_partial: bool,
    pub test_last_partial: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ShardPlan {
    pub fn train_indices(&self, shards: usize) -> Vec<usize> {
        self.train_shards.iter().take(shards).flatten().copied().collect()
    }

    pub fn test_indices(&self, shards: usize) -> Vec<usize> {
        self.test_shards.iter().take(shards).flatten().copied().collect()
    }
}

fn chunk(indices: &[usize], size: usize) -> (Vec<Vec<usize>>, bool) {
    let shards: Vec<Vec<usize>> = indices.chunks(size).map(<[usize]>::to_vec).collect();
    let partial = shards.last().is_some_and(|s| s.len() < size);
    (shards, partial)
}

/// Shuffle the records with `seed`, split at `ratio` and cut each side into
/// shards. The final partial shard on either side is kept and flagged.
pub fn split_shards(
    records: &[ValidRecord],
    ratio: f64,
    train_shard: usize,
    test_shard: usize,
    seed: u64,
) -> Result<ShardPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio {ratio} not in (0,1)")));
    }
    if train_shard == 0 || test_shard == 0 {
        return Err(Error::InvalidParameter("shard sizes must be positive".into()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_train = (records.len() as f64 * ratio).round() as usize;
    let (train, test) = order.split_at(n_train);
    let (train_shards, train_last_partial) = chunk(train, train_shard);
    let (test_shards, test_last_partial) = chunk(test, test_shard);

    let mut warnings = Vec::new();
    if train.len() < train_shard {
        warnings.push(format!(
            "only {} training records for shard size {train_shard}; using a single partial shard",
            train.len()
        ));
    }
    if test.len() < test_shard {
        warnings.push(format!(
            "only {} test records for shard size {test_shard}; using a single partial shard",
            test.len()
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ShardPlan {
        train_shards,
        test_shards,
        shard_size_train: train_shard,
        shard_size_test: test_shard,
        split_ratio: ratio,
        train_last_partial,
        test_last_partial,
        warnings,
    })
}
