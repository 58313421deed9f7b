//! Seeded, stream-separated random sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::{DenseMatrix, MatrixError, Result};
use crate::scalar::Real;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams with the same pair yield the same sequence on every platform and
/// thread schedule; parallel work should use distinct stream ids.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `tag`, independent of how far `self` has advanced.
    pub fn fork(&self, tag: u64) -> Self {
        Self::new(self.seed, mix_stream_id(self.stream_id, tag))
    }

    pub fn uniform01<T: Real>(&mut self) -> T {
        T::lit(self.inner.random::<f64>())
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal<T: Real>(&mut self) -> T {
        T::lit(self.inner.sample::<f64, _>(StandardNormal))
    }

    pub fn gaussian<T: Real>(&mut self, mean: T, variance: T) -> Result<T> {
        check_variance(variance)?;
        Ok(mean + variance.sqrt() * self.standard_normal::<T>())
    }

    /// `rows × cols` i.i.d. N(mean, variance) entries, drawn row by row.
    pub fn gaussian_matrix<T: Real>(
        &mut self,
        rows: usize,
        cols: usize,
        mean: T,
        variance: T,
    ) -> Result<DenseMatrix<T>> {
        check_variance(variance)?;
        let sd = variance.sqrt();
        DenseMatrix::from_fn(rows, cols, |_, _| mean + sd * self.standard_normal::<T>())
    }

    /// Uniform draw from `[-hi, -lo] ∪ [lo, hi]`.
    pub fn uniform_shell<T: Real>(&mut self, lo: T, hi: T) -> Result<T> {
        if !(lo >= T::zero() && lo < hi && hi.is_finite()) {
            return Err(MatrixError::InvalidParameter(format!(
                "shell magnitudes must satisfy 0 <= lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        let mag = lo + (hi - lo) * self.uniform01::<T>();
        Ok(if self.inner.random::<bool>() {
            mag
        } else {
            -mag
        })
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical<T: Real>(&mut self, weights: &[T]) -> Result<usize> {
        let total: T = weights.iter().copied().sum();
        if weights.is_empty() || weights.iter().any(|w| *w < T::zero()) || total <= T::zero() {
            return Err(MatrixError::InvalidParameter(
                "categorical weights must be non-negative with positive sum".into(),
            ));
        }
        let u = self.uniform01::<T>() * total;
        let mut acc = T::zero();
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(i);
            }
        }
        // Rounding: fall back to the last positive weight.
        Ok(weights.iter().rposition(|w| *w > T::zero()).unwrap_or(0))
    }

    /// Uniformly random `count`-subset of `0..n`, sorted.
    pub fn subset(&mut self, n: usize, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let count = count.min(n);
        for i in 0..count {
            let j = i + self.index(n - i);
            idx.swap(i, j);
        }
        let mut out = idx[..count].to_vec();
        out.sort_unstable();
        out
    }
}

fn check_variance<T: Real>(variance: T) -> Result<()> {
    if variance >= T::zero() && variance.is_finite() {
        Ok(())
    } else {
        Err(MatrixError::InvalidParameter(format!(
            "variance must be finite and non-negative, got {variance}"
        )))
    }
}

/// Deterministic 64-bit mix of two stream keys (splitmix64 finalizer).
pub fn mix_stream_id(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_is_constant() {
        let mut rng = RngStream::new(1, 2);
        let m: DenseMatrix<f64> = rng.gaussian_matrix(3, 4, 2.5, 0.0).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = RngStream::new(1, 2);
        assert!(rng.gaussian_matrix::<f64>(2, 2, 0.0, -1.0).is_err());
        assert!(rng.uniform_shell(1.5f64, 0.5).is_err());
        assert!(rng.uniform_shell(-0.1f64, 0.5).is_err());
        assert!(rng.categorical::<f64>(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn shell_range() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..10_000 {
            let x: f64 = rng.uniform_shell(0.5, 1.5).unwrap();
            assert!((0.5..=1.5).contains(&x.abs()));
        }
    }

    #[test]
    fn shell_mean_is_near_zero() {
        // Var of the shell draw is E[x^2] = (1.5^3 - 0.5^3) / 3 = 13/12.
        let mut rng = RngStream::new(4, 0);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| rng.uniform_shell::<f64>(0.5, 1.5).unwrap())
            .sum::<f64>()
            / n as f64;
        let sd_of_mean = (13.0f64 / 12.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd_of_mean, "mean {mean}");
    }

    #[test]
    fn streams_reproduce_and_separate() {
        let draw = |seed, id| {
            let mut r = RngStream::new(seed, id);
            (0..16)
                .map(|_| r.standard_normal::<f64>().to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11, 3), draw(11, 3));
        assert_ne!(draw(11, 3), draw(11, 4));
        assert_ne!(draw(11, 3), draw(12, 3));
    }

    #[test]
    fn subset_is_sorted_and_distinct() {
        let mut rng = RngStream::new(5, 0);
        let s = rng.subset(50, 20);
        assert_eq!(s.len(), 20);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
