//! Lehmer-code ranking of permutations and the sentence-reordering label
//! space built on it.

use crate::error::{Error, Result};

/// Largest `n` whose factorial fits in `u64`.
pub const MAX_PERMUTATION_LEN: usize = 20;

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Lexicographic rank of `perm`, a permutation of `0..perm.len()`.
/// The identity has rank 0.
pub fn encode_permutation(perm: &[usize]) -> Result<u64> {
    let n = perm.len();
    if n == 0 || n > MAX_PERMUTATION_LEN {
        return Err(Error::InvalidPermutation(format!("length {n}")));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPermutation(format!("{perm:?}")));
        }
    }
    let mut rank = 0u64;
    for i in 0..n {
        let smaller_after = perm[i + 1..].iter().filter(|&&q| q < perm[i]).count() as u64;
        rank += smaller_after * factorial(n - 1 - i);
    }
    Ok(rank)
}

pub fn decode_permutation(n: usize, rank: u64) -> Result<Vec<usize>> {
    if n == 0 || n > MAX_PERMUTATION_LEN || rank >= factorial(n) {
        return Err(Error::RankOutOfRange { rank, n });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rest = rank;
    let mut perm = Vec::with_capacity(n);
    for i in 0..n {
        let f = factorial(n - 1 - i);
        let digit = (rest / f) as usize;
        rest %= f;
        perm.push(pool.remove(digit));
    }
    Ok(perm)
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Classes for splitting a paragraph into `1..=max_segments` segments and
/// shuffling them: one class per `(n, permutation of n)`, so
/// `class_count = sum_{n=1..m} n!`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReorderingLabelSpace {
    max_segments: usize,
}

impl ReorderingLabelSpace {
    pub fn new(max_segments: usize) -> Result<Self> {
        if max_segments == 0 || max_segments > MAX_PERMUTATION_LEN - 1 {
            return Err(Error::InvalidConfig(format!(
                "reordering needs 1 <= m < {MAX_PERMUTATION_LEN}, got {max_segments}"
            )));
        }
        Ok(ReorderingLabelSpace { max_segments })
    }

    pub fn max_segments(&self) -> usize {
        self.max_segments
    }

    pub fn class_count(&self) -> usize {
        self.offset(self.max_segments + 1) as usize
    }

    /// First label used by arrangements of `n` segments.
    pub fn offset(&self, n: usize) -> u64 {
        (1..n).map(factorial).sum()
    }

    /// `perm[i]` is the original index of the segment shown at position `i`.
    pub fn label(&self, perm: &[usize]) -> Result<u32> {
        let n = perm.len();
        if n > self.max_segments {
            return Err(Error::InvalidPermutation(format!(
                "{n} segments exceed m = {}",
                self.max_segments
            )));
        }
        Ok((self.offset(n) + encode_permutation(perm)?) as u32)
    }

    /// Inverse of [`ReorderingLabelSpace::label`].
    pub fn decode(&self, label: u32) -> Result<Vec<usize>> {
        let label = label as u64;
        for n in 1..=self.max_segments {
            let lo = self.offset(n);
            if label < lo + factorial(n) {
                return decode_permutation(n, label - lo);
            }
        }
        Err(Error::RankOutOfRange {
            rank: label,
            n: self.max_segments,
        })
    }
}
