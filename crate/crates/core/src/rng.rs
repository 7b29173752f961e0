//! Seeded randomness.
//!
//! Everything is driven by ChaCha8 (`rand_chacha`). Matrix samplers give each
//! row its own ChaCha stream and each entry a fixed window of four 32-bit
//! words, so entry `(i, j)` depends only on `(seed, i, j)` and rows can be
//! generated in any order or in parallel.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit words consumed per matrix entry (two `u64` draws).
const WORDS_PER_ENTRY: u128 = 4;

/// Mixes a parent seed with a tag into an independent-looking child seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        ^ tag
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a raw 64-bit draw to the open interval (0, 1).
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Stream positioned at the start of row `row` of a matrix sampled with `seed`.
pub fn row_stream(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Stream positioned at entry `(row, col)`.
pub fn entry_stream(seed: u64, row: usize, col: usize) -> ChaCha8Rng {
    let mut rng = row_stream(seed, row);
    rng.set_word_pos(col as u128 * WORDS_PER_ENTRY);
    rng
}

/// General-purpose sequential generator for sampling decisions.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform_open(&mut self) -> f64 {
        open_unit(self.inner.next_u64())
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n as u64) as usize
    }

    /// First `k` entries of a Fisher–Yates shuffle of `0..n`: a uniform
    /// ordered sample without replacement.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample size {k} exceeds population {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_stream_matches_sequential_row() {
        let mut row = row_stream(42, 3);
        let seq: Vec<u64> = (0..10).map(|_| row.next_u64()).collect();
        for col in 0..5 {
            let mut e = entry_stream(42, 3, col);
            assert_eq!(e.next_u64(), seq[2 * col]);
            assert_eq!(e.next_u64(), seq[2 * col + 1]);
        }
    }

    #[test]
    fn open_unit_excludes_endpoints() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn sample_without_replacement_is_distinct() {
        let mut rng = SeededRng::new(7);
        let mut s = rng.sample_without_replacement(50, 20);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 20);
        assert!(s.iter().all(|&i| i < 50));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
