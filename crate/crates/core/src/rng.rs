//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the experiment seed and
//! selected by a 64-bit stream id, so stream `i` produces the same words no
//! matter which thread consumes it or in which order streams are opened.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Opens stream `id` of the generator keyed by `seed`.
pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derives a sub-stream id from a parent id and a label, so that nested
/// consumers (sample `i`, backward half) never collide.
pub fn substream(id: u64, label: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = id
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(label.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) with 53 random bits.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sixty-four independent Bernoulli(p) bits at once.
///
/// Lane `i` compares a lazily revealed uniform against the binary expansion
/// of `p`, most significant bit first; a lane is decided at the first bit
/// where they differ. Exact for the 53-bit expansion of `p`, and needs about
/// eight words of randomness per 64 lanes.
pub fn bernoulli_mask(rng: &mut impl RngCore, p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return u64::MAX;
    }
    let mut undecided = u64::MAX;
    let mut ones = 0u64;
    let mut frac = p;
    for _ in 0..53 {
        frac *= 2.0;
        let bit = if frac >= 1.0 {
            frac -= 1.0;
            true
        } else {
            false
        };
        let r = rng.next_u64();
        if bit {
            // uniform bit 0 where p has 1: uniform < p, lane decided as success
            ones |= undecided & !r;
            undecided &= r;
        } else {
            // uniform bit 1 where p has 0: uniform > p, lane decided as failure
            undecided &= !r;
        }
        if undecided == 0 || frac == 0.0 {
            break;
        }
    }
    ones
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, 3);
        let mut b = stream(7, 3);
        let mut c = stream(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn bernoulli_mask_frequency() {
        let mut rng = stream(11, 0);
        for &p in &[0.3, 0.5, 0.7] {
            let words = 20_000;
            let ones: u64 = (0..words)
                .map(|_| bernoulli_mask(&mut rng, p).count_ones() as u64)
                .sum();
            let n = (words * 64) as f64;
            let freq = ones as f64 / n;
            let sigma = (p * (1.0 - p) / n).sqrt();
            assert!((freq - p).abs() < 4.0 * sigma, "p={p} freq={freq}");
        }
    }

    #[test]
    fn bernoulli_mask_degenerate() {
        let mut rng = stream(1, 1);
        assert_eq!(bernoulli_mask(&mut rng, 0.0), 0);
        assert_eq!(bernoulli_mask(&mut rng, 1.0), u64::MAX);
        // p = 1/2 has a single one bit: each lane is a fair coin
        let m = bernoulli_mask(&mut rng, 0.5);
        assert!(m != 0 && m != u64::MAX);
    }
}
