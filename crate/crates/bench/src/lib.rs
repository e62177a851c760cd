//! Random inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdtlab::lattice::{CtcLogits, TdtConfig, TdtLatticeLogits};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn target(rng: &mut ChaCha8Rng, tokens: usize, vocab: usize) -> Vec<usize> {
    (0..tokens).map(|_| rng.random_range(0..vocab)).collect()
}

pub fn ctc_logits(rng: &mut ChaCha8Rng, frames: usize, vocab: usize) -> CtcLogits {
    let values = (0..frames * (vocab + 1)).map(|_| rng.random_range(-2.0..2.0)).collect();
    CtcLogits::new(frames, vocab, values).expect("valid shape")
}

pub fn tdt_logits(rng: &mut ChaCha8Rng, frames: usize, tokens: usize, vocab: usize, cfg: &TdtConfig) -> TdtLatticeLogits {
    let rows = tokens + 1;
    let token = (0..frames * rows * (vocab + 1)).map(|_| rng.random_range(-2.0..2.0)).collect();
    let duration = (0..frames * rows * cfg.durations.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    TdtLatticeLogits::new(frames, rows, vocab + 1, cfg.durations.len(), token, duration).expect("valid shape")
}

/// Words drawn from a small inventory, some cased or punctuated.
pub fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    const WORDS: [&str; 8] = ["the", "Cat", "sat", "on", "a", "mat,", "today.", "Why?"];
    (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}
