//! Seeding and random draws shared by the stochastic integrators.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::scalar::{lit, Real, C};

/// Generator used for every trajectory. ChaCha8 output is specified
/// bit-for-bit, so records are reproducible across platforms.
pub type TrajRng = rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble driven by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_from_seed(seed: u64) -> TrajRng {
    TrajRng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform<T: Real>(rng: &mut TrajRng) -> T {
    lit(rng.random::<f64>())
}

/// Standard normal draw.
#[inline]
pub fn normal<T: Real>(rng: &mut TrajRng) -> T {
    lit(rng.sample::<f64, _>(StandardNormal))
}

/// Complex Wiener increment with `E|dZ|² = dt`, i.e. `(dWx + i dWy)/√2`.
#[inline]
pub fn complex_increment<T: Real>(rng: &mut TrajRng, dt: T) -> C<T> {
    let s = (dt * lit(0.5)).sqrt();
    C::new(normal::<T>(rng) * s, normal::<T>(rng) * s)
}
