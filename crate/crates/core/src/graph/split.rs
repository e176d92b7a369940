use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Train / validation / test fractions used when a dataset ships without splits.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.48, 0.32, 0.20);

/// One train/val/test partition of the labelled nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    #[serde(skip)]
    pub split_id: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSet {
    /// Checks disjointness, range, a non-empty train set, and known train labels.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let err = |message: String| Error::InvalidSplit {
            split_id: self.split_id,
            message,
        };
        if self.train.is_empty() {
            return Err(err("train set is empty".into()));
        }
        let mut owner = vec![None; g.num_nodes()];
        for (name, part) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for &v in part {
                if v >= g.num_nodes() {
                    return Err(err(format!(
                        "{name} index {v} out of range for {} nodes",
                        g.num_nodes()
                    )));
                }
                if let Some(prev) = owner[v].replace(name) {
                    return Err(err(format!("node {v} appears in both {prev} and {name}")));
                }
            }
        }
        if let Some(&v) = self.train.iter().find(|&&v| g.label(v).is_none()) {
            return Err(err(format!("train node {v} has no known label")));
        }
        Ok(())
    }
}

/// Random splits over the labelled nodes at [`SPLIT_RATIOS`].
///
/// Split `k` shuffles with seed `seed + k`, so each split is reproducible on its own.
pub fn random_splits(g: &Graph, count: usize, seed: u64) -> Result<Vec<SplitSet>> {
    let labelled: Vec<usize> = (0..g.num_nodes())
        .filter(|&v| g.label(v).is_some())
        .collect();
    if labelled.is_empty() {
        return Err(Error::InvalidArgument("no labelled nodes to split".into()));
    }
    let n = labelled.len();
    let n_train = ((n as f64 * SPLIT_RATIOS.0).round() as usize).max(1);
    let n_val = ((n as f64 * SPLIT_RATIOS.1).round() as usize).min(n - n_train);
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut order = labelled.clone();
            order.shuffle(&mut rng);
            let mut train = order[..n_train].to_vec();
            let mut val = order[n_train..n_train + n_val].to_vec();
            let mut test = order[n_train + n_val..].to_vec();
            train.sort_unstable();
            val.sort_unstable();
            test.sort_unstable();
            let s = SplitSet {
                split_id: k,
                train,
                val,
                test,
            };
            s.validate(g)?;
            Ok(s)
        })
        .collect()
}
