//! Shared inputs for the benchmarks.

use countcopula::sampler::simulate_counts;
use countcopula::{LatentModel, Marginal, MarginalPath};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Poisson(2) marginal path and an AR(1) series of `n` values with φ = 0.75.
pub fn poisson_ar1(n: usize, seed: u64) -> (MarginalPath, LatentModel, Vec<u64>) {
    let path = MarginalPath::stationary(&Marginal::Poisson { lambda: 2.0 }).expect("valid marginal");
    let model = LatentModel::ar1(0.75);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = simulate_counts(&path, &model, n, &mut rng).expect("simulation").counts;
    (path, model, counts)
}
