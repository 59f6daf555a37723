//! Counter-based letter streams: the letter at position `t` is a pure function of
//! `(seed, cursor + t)`, so shifting is free and any consumer sees the same sequence.

use std::sync::Arc;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent sample of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ 0xA076_1D64_78BD_642F).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Uniform in [0,1) from 53 high bits.
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index of the first cumulative weight exceeding `u`.
pub fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Cumulative distribution with the last entry forced to 1 and zero-probability
/// letters never selected.
pub fn cumulative(probs: &[f64]) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p / total;
            acc
        })
        .collect();
    if let Some(last) = probs.iter().rposition(|&p| p > 0.0) {
        for c in out.iter_mut().skip(last) {
            *c = 1.0;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RealizationStream {
    seed: u64,
    cursor: u64,
    cdf: Arc<[f64]>,
}

impl RealizationStream {
    pub fn new(seed: u64, probs: &[f64]) -> Self {
        Self {
            seed,
            cursor: 0,
            cdf: cumulative(probs).into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Letter at position `t` relative to the cursor (0-based letter index).
    pub fn letter(&self, t: u64) -> usize {
        if self.cdf.len() == 1 {
            return 0;
        }
        let pos = self.cursor.wrapping_add(t);
        let x =
            mix64(mix64(self.seed).wrapping_add(pos.wrapping_mul(GOLDEN)) ^ 0x5851_F42D_4C95_7F2D);
        pick(&self.cdf, unit_f64(x))
    }

    pub fn sample_letters(&self, count: usize) -> Vec<usize> {
        (0..count as u64).map(|t| self.letter(t)).collect()
    }

    /// σ^k: the same stream viewed from `k` letters later.
    pub fn shifted(&self, k: u64) -> Self {
        Self {
            seed: self.seed,
            cursor: self.cursor + k,
            cdf: Arc::clone(&self.cdf),
        }
    }
}
