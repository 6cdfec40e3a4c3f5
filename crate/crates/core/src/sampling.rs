//! Reproducible random streams and response samplers for every family.
//!
//! Streams come from ChaCha12, a counter-based generator: the key is the
//! master seed and the 64-bit stream id selects an independent sequence, so
//! replication `i` draws the same numbers however work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, Normal, Poisson};

use crate::family::{Family, FamilyKind};

pub type StreamRng = ChaCha12Rng;

/// The independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean)
        .expect("finite positive Poisson mean")
        .sample(rng)
}

/// Negative binomial with mean `mean` and size `k` (variance `m + m²/k`),
/// drawn as a gamma-Poisson mixture.
pub fn sample_negative_binomial<R: Rng + ?Sized>(mean: f64, k: f64, rng: &mut R) -> f64 {
    let rate = Gamma::new(k, mean / k)
        .expect("valid gamma parameters")
        .sample(rng);
    sample_poisson(rate, rng)
}

/// One draw of `Y` given its mean under `family`.
pub fn sample_response<R: Rng + ?Sized>(family: &Family, mean: f64, rng: &mut R) -> f64 {
    let phi = family.dispersion;
    match family.kind {
        FamilyKind::Normal => Normal::new(mean, phi.sqrt())
            .expect("finite normal")
            .sample(rng),
        FamilyKind::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
        FamilyKind::Poisson => sample_poisson(mean, rng),
        FamilyKind::Gamma => Gamma::new(phi, mean / phi)
            .expect("valid gamma")
            .sample(rng),
        FamilyKind::InverseGaussian => InverseGaussian::new(mean, phi)
            .expect("valid inverse Gaussian")
            .sample(rng),
        FamilyKind::NegativeBinomial => sample_negative_binomial(mean, phi, rng),
    }
}
