//! Keyed hash family used by the local-hashing mechanisms.
//!
//! A member of the family is identified by a 64-bit seed. Evaluation is
//! `mix64(seed ^ mix64(v)) mod g` with `mix64` the SplitMix64 finalizer.
//! This function is fixed: changing it changes every hashed report.

use serde::{Deserialize, Serialize};

use crate::rng::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFunction {
    pub seed: u64,
    pub g: usize,
}

impl HashFunction {
    pub fn new(seed: u64, g: usize) -> Self {
        debug_assert!(g >= 2);
        HashFunction { seed, g }
    }

    #[inline]
    pub fn eval(&self, v: usize) -> usize {
        hash_value(self.seed, v, self.g)
    }
}

#[inline]
pub fn hash_value(seed: u64, v: usize, g: usize) -> usize {
    let h = mix64(seed ^ mix64(v as u64));
    // Multiply-shift range reduction: unbiased enough for g << 2^32 and
    // cheaper than `%`.
    ((h as u128 * g as u128) >> 64) as usize
}
