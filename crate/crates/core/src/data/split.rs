use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Leading rows train, trailing rows test (time order preserved).
    Sequential,
    /// Seeded permutation before cutting.
    Shuffled,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Sequential => "sequential",
            SplitMode::Shuffled => "shuffled",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" => Ok(SplitMode::Sequential),
            "shuffled" | "shuffle" => Ok(SplitMode::Shuffled),
            other => Err(Error::InvalidConfig(format!(
                "unknown split mode `{other}`"
            ))),
        }
    }
}

/// `(train, test)` row counts: `train = floor(n * (1 - test_fraction))`.
pub fn split_sizes(n: usize, test_fraction: f64) -> Result<(usize, usize)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    // The epsilon absorbs representation error in 1 - f (e.g. 10 * 0.8).
    let train = ((n as f64) * (1.0 - test_fraction) + 1e-9).floor() as usize;
    let train = train.min(n);
    let test = n - train;
    if train == 0 || test == 0 {
        return Err(Error::Data(format!(
            "split of {n} rows at test fraction {test_fraction} leaves an empty side"
        )));
    }
    Ok((train, test))
}

/// Row indices of the train and test sides.
pub fn split_indices(
    n: usize,
    test_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (n_train, _) = split_sizes(n, test_fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    if mode == SplitMode::Shuffled {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.len(), test_fraction, seed, mode)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Replaces each cell by 0 with probability `mask_prob`. Returns the number of
/// masked cells.
pub fn random_mask(features: &mut [f64], mask_prob: f64, seed: u64) -> Result<usize> {
    if !(0.0..1.0).contains(&mask_prob) {
        return Err(Error::InvalidConfig(format!(
            "mask probability must lie in [0, 1), got {mask_prob}"
        )));
    }
    if mask_prob == 0.0 {
        return Ok(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = 0;
    for v in features.iter_mut() {
        if rng.random::<f64>() < mask_prob {
            *v = 0.0;
            masked += 1;
        }
    }
    Ok(masked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(split_sizes(10, 0.2).unwrap(), (8, 2));
        assert_eq!(split_sizes(449_919, 0.2).unwrap(), (359_935, 89_984));
        assert_eq!(split_sizes(172_801, 0.2).unwrap(), (138_240, 34_561));
        assert!(split_sizes(1, 0.2).is_err());
        assert!(split_sizes(10, 0.0).is_err());
        assert!(split_sizes(10, 1.0).is_err());
    }

    #[test]
    fn partitions_and_determinism() {
        for mode in [SplitMode::Sequential, SplitMode::Shuffled] {
            let (a, b) = split_indices(97, 0.3, 5, mode).unwrap();
            let (a2, b2) = split_indices(97, 0.3, 5, mode).unwrap();
            assert_eq!((&a, &b), (&a2, &b2));
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..97).collect::<Vec<_>>());
        }
        let (train, _) = split_indices(10, 0.2, 0, SplitMode::Sequential).unwrap();
        assert_eq!(train, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn masking() {
        let mut v = vec![1.0; 10_000];
        assert_eq!(random_mask(&mut v, 0.0, 3).unwrap(), 0);
        assert!(v.iter().all(|&x| x == 1.0));
        assert!(random_mask(&mut v, 1.0, 3).is_err());
        let n = random_mask(&mut v, 0.25, 3).unwrap();
        let frac = n as f64 / 10_000.0;
        assert!((0.22..=0.28).contains(&frac), "{frac}");
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), n);
    }
}
