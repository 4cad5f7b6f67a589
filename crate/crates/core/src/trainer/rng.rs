use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream per epoch of a seeded run.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}
