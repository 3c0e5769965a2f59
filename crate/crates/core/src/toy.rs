//! Synthetic parallel corpora for smoke tests and sanity experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Tokens;
use crate::error::{Error, Result};

/// How the target side is derived from the random source side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyTask {
    /// Target equals source.
    Copy,
    /// Target is the source reversed.
    Reverse,
}

/// Token names `w0 … w{V-1}`.
pub fn toy_token(index: usize) -> String {
    format!("w{index}")
}

/// `count` random pairs over a vocabulary of `vocab` tokens, with source
/// lengths drawn uniformly from `min_len..=max_len`.
pub fn toy_corpus(
    task: ToyTask,
    vocab: usize,
    min_len: usize,
    max_len: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(Tokens, Tokens)>> {
    if vocab == 0 || min_len == 0 || min_len > max_len {
        return Err(Error::InvalidConfig(format!(
            "toy corpus needs vocab >= 1 and 1 <= min_len <= max_len, got {vocab}, {min_len}..={max_len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            let source: Tokens = (0..len)
                .map(|_| toy_token(rng.gen_range(0..vocab)))
                .collect();
            let mut target = source.clone();
            if task == ToyTask::Reverse {
                target.reverse();
            }
            (source, target)
        })
        .collect())
}
