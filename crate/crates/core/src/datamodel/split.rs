use serde::{Deserialize, Serialize};

use crate::numkit::{NumError, RngStream};
use crate::Result;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;
const MIN_RECORDS: usize = 10;

/// Disjoint, sorted index lists covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Random train/validation partition of `n` records; `round(fraction * n)`
/// records go to training.
pub fn split(n: usize, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if n < MIN_RECORDS {
        return Err(NumError::InsufficientData {
            needed: MIN_RECORDS,
            got: n,
            what: "a train/validation split".into(),
        }
        .into());
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(NumError::InvalidInput(format!("split fraction {fraction} outside [0, 1]")).into());
    }
    let n_train = (fraction * n as f64).round() as usize;
    let perm = RngStream::new(seed).permutation(n);
    let mut train = perm[..n_train].to_vec();
    let mut validation = perm[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitIndices { train, validation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_records_split_nine_one() {
        let s = split(10, 0.9, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (9, 1));
    }

    #[test]
    fn too_few_records() {
        assert!(split(9, 0.9, 0).is_err());
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = split(57, 0.9, 11).unwrap();
        assert_eq!(a, split(57, 0.9, 11).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }
}
