use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::patches::PatchSet;
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Number of training items for `n` items; both sides keep at least one.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Seeded shuffled partition of `0..n`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 patches to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = idx.split_off(train_count(n, fraction));
    Ok((idx, val))
}

pub fn split(ps: PatchSet, fraction: f64, seed: u64) -> Result<(PatchSet, PatchSet)> {
    let (tr, va) = split_indices(ps.len(), fraction, seed)?;
    let mut slots: Vec<_> = ps.patches.into_iter().map(Some).collect();
    let mut take = |ix: Vec<usize>| PatchSet {
        patches: ix
            .into_iter()
            .map(|i| slots[i].take().expect("indices are a partition"))
            .collect(),
    };
    let train = take(tr);
    let val = take(va);
    Ok((train, val))
}
