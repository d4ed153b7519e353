//! Poisson arrival streams.

use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng;

/// Arrival times on `[0, duration)` with i.i.d. exponential gaps.
pub fn poisson_arrivals(rate: f64, duration: f64, seed: u64) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Precondition(format!("arrival rate {rate} must be > 0")));
    }
    if !(duration >= 0.0) {
        return Err(Error::Precondition(format!("duration {duration} must be >= 0")));
    }
    let gap = Exp::new(rate).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut r = rng::stream(seed, &[rng::TAG_ARRIVALS]);
    let mut out = Vec::with_capacity((rate * duration * 1.01) as usize + 16);
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut r);
        if t >= duration {
            return Ok(out);
        }
        out.push(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_within_three_sigma() {
        let a = poisson_arrivals(1000.0, 100.0, 3).unwrap();
        let n = a.len() as f64;
        assert!((n - 1e5).abs() < 3.0 * 1e5f64.sqrt(), "{n}");
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_horizon() {
        assert!(poisson_arrivals(10.0, 0.0, 1).unwrap().is_empty());
        assert!(poisson_arrivals(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn mean_gap() {
        let a = poisson_arrivals(500.0, 2000.0, 5).unwrap();
        let mean = a.last().unwrap() / a.len() as f64;
        assert!(a.len() >= 1_000_000);
        assert!((mean - 2e-3).abs() < 2e-3 * 0.005, "{mean}");
    }
}
