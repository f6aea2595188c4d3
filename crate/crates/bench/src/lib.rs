//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// `n` draws from `1 + 0.5 sin(2 pi x)` by rejection, fixed seed.
pub fn sine_samples(n: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: f64 = rng.random();
        let u: f64 = rng.random::<f64>() * 1.5;
        if u <= 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin() {
            out.push(x);
        }
    }
    out
}
