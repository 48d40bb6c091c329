use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent streams derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Design = 0,
    Innovations = 1,
    Subsample = 2,
    Replication = 3,
}

/// A ChaCha8 generator keyed by `seed` on the given stream.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for replication `r` of an experiment keyed by `master`.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    use rand::RngCore;
    let mut rng = stream_rng(master, Stream::Replication);
    rng.set_word_pos(2 * r as u128);
    rng.next_u64()
}
