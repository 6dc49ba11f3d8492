//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wbsrc_core::{serial_to_parallel, ParallelStream, SerialStream};

pub const RATE_HZ: f64 = 20e6;

/// Uniform full-scale 16-bit samples.
pub fn random_i16(n: usize, seed: u64) -> SerialStream<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SerialStream::new(
        (0..n).map(|_| rng.gen_range(-32768..=32767)).collect(),
        RATE_HZ,
    )
}

pub fn random_frames(n: usize, lanes: usize, seed: u64) -> ParallelStream<i64> {
    serial_to_parallel(&random_i16(n, seed), lanes).expect("lanes > 0")
}
