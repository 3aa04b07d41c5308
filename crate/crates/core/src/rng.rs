//! Seed derivation so independent random streams stay reproducible from one
//! master seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer of `seed` combined with a stream id and counter.
pub fn derive_seed(seed: u64, stream: u64, counter: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, counter))
}

pub(crate) mod stream {
    pub const ENCODER_INIT: u64 = 1;
    pub const DECODER_INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const PRETRAIN_MASK: u64 = 4;
    pub const HOLDOUT: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const RESAMPLE: u64 = 7;
}

/// Contiguous batches over `order`; a trailing batch smaller than two rows is
/// merged into its predecessor.
pub(crate) fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let last = out.pop().expect("at least one batch left");
        let start = order.len() - last.len() - 1;
        out.push(&order[start..]);
    }
    out
}

pub(crate) fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
