//! Mahalanobis geometry on top of a Cholesky factor.
//!
//! Distances are computed as `‖L⁻¹(x - m)‖²` with one forward substitution;
//! no covariance is ever inverted explicitly except to build the certificate
//! matrices in [`theoretical_certificate`].

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bounds::{self, BoundQuery, BoundValue, Inversion};
use crate::error::{Error, Result};
use crate::quantity::Quantity;
use crate::stats::{self, CovarianceKind, SampleStats};

/// Pivots at or below `SINGULAR_PIVOT · trace / dim` mark a matrix singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

/// Relative asymmetry tolerated by [`cholesky`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Lower-triangular `L` with `L Lᵀ = A` and a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

pub fn cholesky(matrix: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let dim = matrix.nrows();
    if dim == 0 || matrix.ncols() != dim {
        return Err(Error::InvalidCovariance("matrix must be square and non-empty"));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCovariance("matrix has non-finite entries"));
    }
    let scale = matrix.amax();
    let asym = (matrix - matrix.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::InvalidCovariance("matrix is not symmetric"));
    }

    let tolerance = SINGULAR_PIVOT * matrix.trace() / dim as f64;
    let mut lower = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut pivot = matrix[(j, j)];
        for k in 0..j {
            pivot -= lower[(j, k)] * lower[(j, k)];
        }
        // Negated so a NaN pivot is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(pivot > tolerance) {
            return Err(Error::SingularCovariance { row: j, pivot });
        }
        let diag = libm::sqrt(pivot);
        lower[(j, j)] = diag;
        for i in (j + 1)..dim {
            let mut s = matrix[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = s / diag;
        }
    }
    Ok(CholeskyFactor { lower })
}

impl CholeskyFactor {
    /// Wraps an existing factor after checking it is lower triangular with a
    /// positive diagonal.
    pub fn from_lower(lower: DMatrix<f64>) -> Result<Self> {
        let dim = lower.nrows();
        if dim == 0 || lower.ncols() != dim {
            return Err(Error::InvalidCovariance("factor must be square and non-empty"));
        }
        for j in 0..dim {
            if !(lower[(j, j)] > 0.0 && lower[(j, j)].is_finite()) {
                return Err(Error::InvalidCovariance("factor diagonal must be positive"));
            }
            for i in 0..dim {
                if (i < j && lower[(i, j)] != 0.0) || !lower[(i, j)].is_finite() {
                    return Err(Error::InvalidCovariance("factor must be lower triangular"));
                }
            }
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// Overwrites `v` with `L⁻¹ v`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_lower_in_place(&self, v: &mut [f64]) {
        let dim = self.dim();
        for i in 0..dim {
            let mut s = v[i];
            for k in 0..i {
                s -= self.lower[(i, k)] * v[k];
            }
            v[i] = s / self.lower[(i, i)];
        }
    }

    /// `(L Lᵀ)⁻¹`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut inv_lower = DMatrix::zeros(dim, dim);
        let mut col = alloc::vec![0.0; dim];
        for j in 0..dim {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_lower_in_place(&mut col);
            for i in 0..dim {
                inv_lower[(i, j)] = col[i];
            }
        }
        let mut inv = inv_lower.transpose() * inv_lower;
        stats::symmetrize(&mut inv);
        inv
    }
}

/// Center plus covariance factor: everything needed for Mahalanobis distances.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisFrame {
    center: DVector<f64>,
    factor: CholeskyFactor,
}

impl MahalanobisFrame {
    pub fn new(center: DVector<f64>, factor: CholeskyFactor) -> Result<Self> {
        if center.len() != factor.dim() {
            return Err(Error::ShapeMismatch {
                expected: factor.dim(),
                actual: center.len(),
            });
        }
        Ok(Self { center, factor })
    }

    /// Empirical mean and unbiased covariance of `stats`.
    pub fn from_stats(stats: &SampleStats) -> Result<Self> {
        let cov = stats.covariance(CovarianceKind::Unbiased)?;
        Ok(Self {
            center: stats.mean().clone(),
            factor: cholesky(&cov)?,
        })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(x - m)ᵀ Λ⁻¹ (x - m)`.
    pub fn mahalanobis_sq(&self, point: &[f64]) -> Result<f64> {
        let mut scratch = [0.0f64; 8];
        let mut heap;
        let buf: &mut [f64] = if self.dim() <= scratch.len() {
            &mut scratch[..self.dim()]
        } else {
            heap = alloc::vec![0.0; self.dim()];
            &mut heap
        };
        self.whiten_into(point, buf)?;
        Ok(buf.iter().map(|x| x * x).sum())
    }

    /// Writes `L⁻¹(x - m)` into `out`.
    pub fn whiten_into(&self, point: &[f64], out: &mut [f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                actual: point.len(),
            });
        }
        for (o, (x, c)) in out.iter_mut().zip(point.iter().zip(self.center.iter())) {
            *o = x - c;
        }
        self.factor.solve_lower_in_place(out);
        Ok(())
    }
}

/// Open ellipsoid `{x : (x - m)ᵀ Λ⁻¹ (x - m) < λ²}` built from `N` samples.
/// A fresh sample from the same distribution falls outside with probability
/// at most `coverage_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEllipsoid {
    frame: MahalanobisFrame,
    radius_sq: f64,
    source_count: u64,
    coverage_bound: BoundValue,
}

impl ConfidenceEllipsoid {
    /// Reassembles an ellipsoid from exported parts; the coverage bound is
    /// recomputed from `(dim, source_count, radius_sq)`.
    pub fn from_parts(
        center: DVector<f64>,
        lower: DMatrix<f64>,
        radius_sq: f64,
        source_count: u64,
    ) -> Result<Self> {
        let frame = MahalanobisFrame::new(center, CholeskyFactor::from_lower(lower)?)?;
        let coverage_bound = coverage_at(frame.dim(), source_count, radius_sq)?;
        Ok(Self {
            frame,
            radius_sq,
            source_count,
            coverage_bound,
        })
    }

    pub fn frame(&self) -> &MahalanobisFrame {
        &self.frame
    }

    pub fn center(&self) -> &DVector<f64> {
        self.frame.center()
    }

    pub fn chol_factor(&self) -> &DMatrix<f64> {
        self.frame.factor().lower()
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn source_count(&self) -> u64 {
        self.source_count
    }

    pub fn coverage_bound(&self) -> &BoundValue {
        &self.coverage_bound
    }

    pub fn mahalanobis_sq(&self, point: &[f64]) -> Result<f64> {
        self.frame.mahalanobis_sq(point)
    }

    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        Ok(self.mahalanobis_sq(point)? < self.radius_sq)
    }
}

/// Smallest ellipsoid around the sample mean whose complement has bound at
/// most `epsilon` for the next sample.
pub fn confidence_ellipsoid(stats: &SampleStats, epsilon: f64) -> Result<ConfidenceEllipsoid> {
    let dim = stats.dim();
    let required = dim as u64 + 1;
    if stats.count() < required {
        return Err(Error::InsufficientSamples {
            required,
            actual: stats.count(),
        });
    }
    let frame = MahalanobisFrame::from_stats(stats)?;
    let threshold = match bounds::invert_bound(dim, stats.count(), epsilon)? {
        Inversion::Feasible(t) => t,
        Inversion::Infeasible { achievable } => {
            return Err(Error::InfeasibleEpsilon {
                epsilon,
                count: stats.count(),
                achievable: num_traits::ToPrimitive::to_f64(&achievable).unwrap_or(1.0),
            })
        }
    };
    let radius_sq = threshold.safe_lambda_sq();
    let coverage_bound = coverage_at(dim, stats.count(), radius_sq)?;
    debug_assert!(coverage_bound.value <= epsilon);
    Ok(ConfidenceEllipsoid {
        frame,
        radius_sq,
        source_count: stats.count(),
        coverage_bound,
    })
}

/// Empirical bound at a float radius, evaluated exactly on that float's value.
pub(crate) fn coverage_at(dim: usize, count: u64, radius_sq: f64) -> Result<BoundValue> {
    let l2 = Quantity::exact_from_f64(radius_sq).ok_or(Error::InvalidRadius)?;
    bounds::empirical_bound(&BoundQuery::new(dim, count, l2)?)
}

/// Maps `N+1` samples to `u_i = L⁻¹(x_i - m)` where `L Lᵀ` is their biased
/// covariance. The output has zero sum and `Σ u_i u_iᵀ = (N+1) I`.
pub fn whiten<S: AsRef<[f64]>>(samples: &[S]) -> Result<Vec<Vec<f64>>> {
    let (mean, cov) = stats::two_pass_covariance(samples, CovarianceKind::Biased)?;
    let frame = MahalanobisFrame::new(mean, cholesky(&cov)?)?;
    samples
        .iter()
        .map(|x| {
            let mut u = alloc::vec![0.0; frame.dim()];
            frame.whiten_into(x.as_ref(), &mut u)?;
            Ok(u)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateBranch {
    /// `τ = 1, r = 0, P = Σ⁻¹/λ²`, objective `n/λ²`.
    Interior,
    /// `τ = 0, r = 1, P = 0`, objective `1`.
    Saturated,
}

/// A candidate `(P, q, r, τ)` for the moment problem bounding
/// `P[ηᵀ Σ⁻¹ η ≥ λ²]` for zero-mean `η` with covariance `Σ`, and the
/// eigenvalue check of its two LMIs:
///
/// ```text
/// [P  q; qᵀ r]     ⪰ 0                       (f ≥ 0 everywhere)
/// [P  q; qᵀ r - 1] ⪰ τ [Σ⁻¹/λ²  0; 0  -1]    (f ≥ 1 outside the ellipsoid)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub branch: CertificateBranch,
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub tau: f64,
    /// `tr(ΣP) + r`, the expected value of the majorant.
    pub objective: f64,
    /// Smallest eigenvalue over both LMIs and `τ`.
    pub min_lmi_eigenvalue: f64,
    pub feasible: bool,
    shape: DMatrix<f64>,
}

impl CertificateReport {
    /// `f(η) = ηᵀPη + 2qᵀη + r`.
    pub fn majorant(&self, eta: &DVector<f64>) -> f64 {
        (eta.transpose() * &self.p * eta)[(0, 0)] + 2.0 * self.q.dot(eta) + self.r
    }

    /// Whether `η` lies outside the open ellipsoid `ηᵀ Σ⁻¹ η / λ² < 1`.
    pub fn outside_ellipsoid(&self, eta: &DVector<f64>) -> bool {
        (eta.transpose() * &self.shape * eta)[(0, 0)] >= 1.0
    }
}

pub const DEFAULT_CERTIFICATE_TOLERANCE: f64 = 1e-9;

/// Builds the closed-form optimum of the moment SDP (with `q = 0`) and checks
/// its LMIs by eigenvalues. Verifies; does not solve.
pub fn theoretical_certificate(sigma: &DMatrix<f64>, lambda_sq: f64, tol: f64) -> Result<CertificateReport> {
    if !(lambda_sq > 0.0 && lambda_sq.is_finite()) {
        return Err(Error::InvalidRadius);
    }
    let factor = cholesky(sigma).map_err(|e| match e {
        Error::SingularCovariance { .. } => Error::InvalidCovariance("sigma is not positive definite"),
        other => other,
    })?;
    let dim = sigma.nrows();
    let shape = factor.inverse() / lambda_sq;

    let (branch, p, r, tau) = if dim as f64 <= lambda_sq {
        (CertificateBranch::Interior, shape.clone(), 0.0, 1.0)
    } else {
        (CertificateBranch::Saturated, DMatrix::zeros(dim, dim), 1.0, 0.0)
    };
    let q = DVector::zeros(dim);

    let nonneg = bordered(&p, &q, r);
    let sproc = bordered(&(&p - &shape * tau), &q, r - 1.0 + tau);
    let min_lmi_eigenvalue = min_eigenvalue(&nonneg).min(min_eigenvalue(&sproc)).min(tau);
    let objective = (sigma * &p).trace() + r;

    Ok(CertificateReport {
        branch,
        p,
        q,
        r,
        tau,
        objective,
        min_lmi_eigenvalue,
        feasible: min_lmi_eigenvalue >= -tol,
        shape,
    })
}

fn bordered(block: &DMatrix<f64>, col: &DVector<f64>, corner: f64) -> DMatrix<f64> {
    let n = block.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(block);
    for i in 0..n {
        m[(i, n)] = col[i];
        m[(n, i)] = col[i];
    }
    m[(n, n)] = corner;
    m
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}
