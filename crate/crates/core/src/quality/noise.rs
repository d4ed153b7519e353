//! Score noise: a model's predicted CTR is the latent relevance plus
//! Gaussian noise, clamped to `[0, 1]`. The noise level is calibrated so a
//! 0.5-threshold classifier reproduces the model's error rate.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::query::RelevanceDist;

const CLASS_THRESHOLD: f64 = 0.5;
const MAX_SIGMA: f64 = 1e3;

#[inline]
pub fn noisy_score<T: Scalar>(relevance: T, sigma: T, z: T) -> T {
    (relevance + sigma * z).max(T::zero()).min(T::one())
}

/// Draws one predicted score for an item of the given relevance.
pub fn model_score<T: Scalar, R: rand::Rng + ?Sized>(sigma: T, relevance: T, rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    noisy_score(relevance, sigma, T::lit(z))
}

/// Monte Carlo sample shared across every evaluation of one calibration.
pub struct ErrorSample {
    relevance: Vec<f64>,
    z: Vec<f64>,
}

impl ErrorSample {
    pub fn draw(dist: &RelevanceDist, n: usize, seed: u64) -> Result<Self> {
        let sampler = dist.sampler()?;
        let mut rng = rng::stream(seed, &[rng::TAG_CALIBRATE]);
        let mut relevance = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            relevance.push(sampler.sample(&mut rng));
            z.push(StandardNormal.sample(&mut rng));
        }
        Ok(ErrorSample { relevance, z })
    }

    /// Misclassification rate at noise level `sigma`.
    pub fn error(&self, sigma: f64) -> f64 {
        let wrong = self
            .relevance
            .iter()
            .zip(&self.z)
            .filter(|&(&r, &z)| {
                (r >= CLASS_THRESHOLD) != (noisy_score(r, sigma, z) >= CLASS_THRESHOLD)
            })
            .count();
        wrong as f64 / self.relevance.len() as f64
    }
}

/// Measured error of a `sigma`-noise classifier on a fresh sample.
pub fn measure_error(sigma: f64, dist: &RelevanceDist, n_mc: usize, seed: u64) -> Result<f64> {
    Ok(ErrorSample::draw(dist, n_mc, seed)?.error(sigma))
}

/// Smallest noise level whose Monte Carlo error reaches `error_rate`.
pub fn calibrate_noise(
    error_rate: f64,
    dist: &RelevanceDist,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    if !(error_rate > 0.0 && error_rate < 0.5) {
        return Err(Error::Precondition(format!(
            "error_rate {error_rate} outside (0, 0.5)"
        )));
    }
    if n_mc == 0 {
        return Err(Error::Precondition("n_mc must be >= 1".into()));
    }
    let sample = ErrorSample::draw(dist, n_mc, seed)?;
    let mut hi = 1.0;
    while sample.error(hi) < error_rate {
        hi *= 2.0;
        if hi > MAX_SIGMA {
            return Err(Error::Calibration(format!(
                "error rate {error_rate} unreachable under {dist:?} (max {:.4})",
                sample.error(MAX_SIGMA)
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if sample.error(mid) >= error_rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_sigma_is_identity() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for rel in [0.0, 0.3, 1.0] {
            assert_eq!(model_score(0.0f64, rel, &mut r), rel);
        }
    }

    #[test]
    fn clamped_to_unit_interval() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = model_score(5.0f32, 1.0, &mut r);
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn unclamped_noise_has_requested_spread() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let sigma = 0.02;
        let n = 100_000;
        // relevance 0.5 keeps every draw away from the clamp
        let devs: Vec<f64> = (0..n).map(|_| model_score(sigma, 0.5, &mut r) - 0.5).collect();
        let mean = devs.iter().sum::<f64>() / n as f64;
        let var = devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.01, "{}", var.sqrt());
    }

    #[test]
    fn tiny_error_rate_gives_tiny_sigma() {
        let d = RelevanceDist::default();
        let s = calibrate_noise(1e-5, &d, 200_000, 4).unwrap();
        assert!(s < 0.05, "{s}");
    }

    #[test]
    fn out_of_range_error_rate() {
        let d = RelevanceDist::default();
        assert!(calibrate_noise(0.5, &d, 100, 1).is_err());
        assert!(calibrate_noise(0.0, &d, 100, 1).is_err());
    }
}
