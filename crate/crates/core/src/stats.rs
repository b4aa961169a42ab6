//! Streaming first and second moments.
//!
//! [`SampleStats`] stores the count, the running mean and the scatter matrix
//! `S_N = Σ (x_i - m_N)(x_i - m_N)ᵀ`. Both covariance estimates are derived
//! from the scatter on demand, which keeps [`SampleStats::merge`] exact.
//!
//! The update is Welford's recurrence lifted to vectors:
//!
//! ```text
//! δ       = x - m_N
//! m_{N+1} = m_N + δ / (N + 1)
//! S_{N+1} = S_N + N / (N + 1) · δ δᵀ
//! ```

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Normalisation of the scatter matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    /// `S / N`
    Biased,
    /// `S / (N - 1)`
    Unbiased,
}

impl CovarianceKind {
    fn min_count(self) -> u64 {
        match self {
            CovarianceKind::Biased => 1,
            CovarianceKind::Unbiased => 2,
        }
    }

    fn divisor(self, count: u64) -> f64 {
        match self {
            CovarianceKind::Biased => count as f64,
            CovarianceKind::Unbiased => (count - 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    dim: usize,
    count: u64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl SampleStats {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension);
        }
        Ok(Self {
            dim,
            count: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        })
    }

    /// Builds stats by feeding every sample through [`SampleStats::update`].
    pub fn from_samples<S: AsRef<[f64]>>(dim: usize, samples: &[S]) -> Result<Self> {
        let mut stats = Self::new(dim)?;
        for sample in samples {
            stats.update(sample.as_ref())?;
        }
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    /// Rank-one update with one sample. On error the state is unchanged.
    #[allow(clippy::needless_range_loop)]
    pub fn update(&mut self, sample: &[f64]) -> Result<()> {
        check_sample(self.dim, sample)?;

        let n = self.count as f64;
        let weight = n / (n + 1.0);
        let inv = 1.0 / (n + 1.0);
        let mut delta = [0.0f64; 8];
        let mut heap;
        let delta: &mut [f64] = if self.dim <= delta.len() {
            &mut delta[..self.dim]
        } else {
            heap = Vec::with_capacity(self.dim);
            heap.resize(self.dim, 0.0);
            &mut heap
        };
        for (i, d) in delta.iter_mut().enumerate() {
            *d = sample[i] - self.mean[i];
            self.mean[i] += *d * inv;
        }
        // Upper triangle first, then mirror: keeps the scatter exactly symmetric.
        for j in 0..self.dim {
            let wd = weight * delta[j];
            for i in 0..=j {
                self.scatter[(i, j)] += wd * delta[i];
            }
        }
        mirror_upper(&mut self.scatter);
        self.count += 1;
        Ok(())
    }

    /// Combines the moments of two disjoint sample sets.
    pub fn merge(&self, other: &SampleStats) -> Result<SampleStats> {
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let total = na + nb;
        let delta = &other.mean - &self.mean;
        let mean = &self.mean + &delta * (nb / total);
        let mut scatter = &self.scatter + &other.scatter + (&delta * delta.transpose()) * (na * nb / total);
        symmetrize(&mut scatter);
        Ok(SampleStats {
            dim: self.dim,
            count: self.count + other.count,
            mean,
            scatter,
        })
    }

    pub fn covariance(&self, kind: CovarianceKind) -> Result<DMatrix<f64>> {
        if self.count < kind.min_count() {
            return Err(Error::InsufficientSamples {
                required: kind.min_count(),
                actual: self.count,
            });
        }
        Ok(&self.scatter / kind.divisor(self.count))
    }
}

/// Direct evaluation of the sample mean and covariance sums. Used as the
/// reference the streaming estimator is checked against.
pub fn two_pass_covariance<S: AsRef<[f64]>>(
    samples: &[S],
    kind: CovarianceKind,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let count = samples.len() as u64;
    if count < kind.min_count() {
        return Err(Error::InsufficientSamples {
            required: kind.min_count(),
            actual: count,
        });
    }
    let dim = samples[0].as_ref().len();
    if dim == 0 {
        return Err(Error::InvalidDimension);
    }
    for sample in samples {
        check_sample(dim, sample.as_ref())?;
    }

    let mut mean = DVector::zeros(dim);
    for sample in samples {
        mean += DVector::from_column_slice(sample.as_ref());
    }
    mean /= count as f64;

    let mut scatter = DMatrix::zeros(dim, dim);
    for sample in samples {
        let d = DVector::from_column_slice(sample.as_ref()) - &mean;
        scatter += &d * d.transpose();
    }
    symmetrize(&mut scatter);
    Ok((mean, scatter / kind.divisor(count)))
}

pub(crate) fn check_sample(dim: usize, sample: &[f64]) -> Result<()> {
    if sample.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: dim,
            actual: sample.len(),
        });
    }
    match sample.iter().position(|x| !x.is_finite()) {
        Some(coordinate) => Err(Error::InvalidSample { coordinate }),
        None => Ok(()),
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn mirror_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
}
