//! Order statistics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nearest-rank percentile: the value at 1-based rank `ceil(p / 100 * n)`.
pub fn percentile<T: Scalar>(samples: &[T], p: f64) -> Result<T> {
    let mut v = samples.to_vec();
    percentile_in_place(&mut v, p)
}

/// As [`percentile`], reordering `samples`.
pub fn percentile_in_place<T: Scalar>(samples: &mut [T], p: f64) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Precondition("percentile of no samples".into()));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::Precondition(format!("percentile {p} outside (0, 100]")));
    }
    let n = samples.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let (_, v, _) = samples.select_nth_unstable_by(rank - 1, |a, b| a.cmp_total(b));
    Ok(*v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 99.0).unwrap(), 99.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&v, 0.5).unwrap(), 1.0);
        let w: Vec<f32> = (1..=100).map(|i| i as f32).collect();
        assert_eq!(percentile(&w, 50.0).unwrap(), 50.0);
    }

    #[test]
    fn single_sample() {
        for p in [1.0, 50.0, 99.0, 100.0] {
            assert_eq!(percentile(&[4.5], p).unwrap(), 4.5);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(percentile::<f64>(&[], 50.0).is_err());
        assert!(percentile(&[1.0], 0.0).is_err());
        assert!(percentile(&[1.0], 100.5).is_err());
    }
}
