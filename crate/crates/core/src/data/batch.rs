use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Shuffle order for one epoch; a pure function of `(shuffle_seed, epoch)`.
pub fn epoch_permutation(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    StreamKey::new(shuffle_seed).named("shuffle").split(epoch as u64).rng().permutation(n)
}

/// Index batches over `0..n` for one epoch; the last partial batch is kept.
pub fn batch_iter(n: usize, batch_size: usize, shuffle_seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    Ok(epoch_permutation(n, shuffle_seed, epoch)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_by_four() {
        let b = batch_iter(10, 4, 0, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn deterministic_per_epoch_and_varies_across_epochs() {
        assert_eq!(batch_iter(20, 3, 8, 2).unwrap(), batch_iter(20, 3, 8, 2).unwrap());
        for n in 3..40 {
            assert_ne!(epoch_permutation(n, 8, 0), epoch_permutation(n, 8, 1), "n = {n}");
        }
    }

    #[test]
    fn zero_batch_rejected() {
        assert!(batch_iter(4, 0, 0, 0).is_err());
    }
}
