//! Reproducible sampling and Monte Carlo checks of the bounds.
//!
//! Every trial owns a ChaCha8 stream: the generator is seeded from the run
//! seed and positioned with `set_stream(trial)`, so a trial's draws depend
//! only on `(seed, trial)` and never on how rayon schedules the work.

use empcheb_core::bounds::{asymptotic_bound, counting_bound, empirical_bound};
use empcheb_core::geometry::{cholesky, whiten, CholeskyFactor};
use empcheb_core::{BoundQuery, BoundValue, Error as CoreError, MahalanobisFrame, Quantity, SampleStats};
use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest tolerated share of rejected (singular) trials.
pub const MAX_REJECTION_RATE: f64 = 1e-3;

/// Redraws allowed within one trial before the spec is declared degenerate.
pub const MAX_TRIAL_RETRIES: u32 = 64;

/// Standard errors of slack in the pass criterion.
pub const SLACK_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Independent uniform coordinates on `[lo_j, hi_j)`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Centered multivariate t: `L z · sqrt(ν / w)` with `L Lᵀ = scale`,
    /// `w ~ χ²(ν)`. Covariance `ν/(ν-2) · scale`.
    StudentT { dof: f64, scale: Vec<Vec<f64>> },
    /// Coordinate `j` is `a_j` with probability `p`, else `b_j`, independently.
    TwoPoint { a: Vec<f64>, b: Vec<f64>, p: f64 },
    Mixture {
        components: Vec<DistributionSpec>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("distribution has dimension 0")]
    EmptyDimension,
    #[error("{0} has inconsistent dimensions")]
    Shape(&'static str),
    #[error("{0} contains a non-finite value")]
    NonFinite(&'static str),
    #[error("covariance or scale matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("uniform_box needs lo < hi on every axis")]
    EmptyBox,
    #[error("student_t needs dof > 2 for a finite covariance, got {0}")]
    DegreesOfFreedom(f64),
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("mixture weights must be nonnegative and sum to 1")]
    Weights,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{rejected} of {trials} trials had a singular covariance (limit {limit})")]
    TooManyRejections { rejected: u64, trials: u64, limit: u64 },
    #[error("trial {trial}: covariance stayed singular after {retries} redraws")]
    PersistentSingularity { trial: u64, retries: u32 },
    #[error("{0}")]
    InvalidInput(&'static str),
}

impl DistributionSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        DistributionSpec::Gaussian {
            mean: vec![0.0; dim],
            covariance: identity_rows(dim),
        }
    }

    pub fn unit_box(dim: usize) -> Self {
        DistributionSpec::UniformBox {
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn student_t(dim: usize, dof: f64) -> Self {
        DistributionSpec::StudentT {
            dof,
            scale: identity_rows(dim),
        }
    }

    pub fn two_point(a: Vec<f64>, b: Vec<f64>, p: f64) -> Self {
        DistributionSpec::TwoPoint { a, b, p }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::Gaussian { .. } => "gaussian",
            DistributionSpec::UniformBox { .. } => "uniform_box",
            DistributionSpec::StudentT { .. } => "student_t",
            DistributionSpec::TwoPoint { .. } => "two_point",
            DistributionSpec::Mixture { .. } => "mixture",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Gaussian { mean, .. } => mean.len(),
            DistributionSpec::UniformBox { lo, .. } => lo.len(),
            DistributionSpec::StudentT { scale, .. } => scale.len(),
            DistributionSpec::TwoPoint { a, .. } => a.len(),
            DistributionSpec::Mixture { components, .. } => components.first().map_or(0, |c| c.dim()),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        Sampler::new(self).map(|_| ())
    }

    /// Population mean.
    pub fn mean(&self) -> DVector<f64> {
        let dim = self.dim();
        match self {
            DistributionSpec::Gaussian { mean, .. } => DVector::from_column_slice(mean),
            DistributionSpec::UniformBox { lo, hi } => DVector::from_fn(dim, |j, _| 0.5 * (lo[j] + hi[j])),
            DistributionSpec::StudentT { .. } => DVector::zeros(dim),
            DistributionSpec::TwoPoint { a, b, p } => DVector::from_fn(dim, |j, _| p * a[j] + (1.0 - p) * b[j]),
            DistributionSpec::Mixture { components, weights } => components
                .iter()
                .zip(weights)
                .fold(DVector::zeros(dim), |acc, (c, w)| acc + c.mean() * *w),
        }
    }

    /// Population covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let dim = self.dim();
        match self {
            DistributionSpec::Gaussian { covariance, .. } => matrix(covariance),
            DistributionSpec::UniformBox { lo, hi } => {
                DMatrix::from_fn(dim, dim, |i, j| if i == j { (hi[i] - lo[i]).powi(2) / 12.0 } else { 0.0 })
            }
            DistributionSpec::StudentT { dof, scale } => matrix(scale) * (dof / (dof - 2.0)),
            DistributionSpec::TwoPoint { a, b, p } => {
                DMatrix::from_fn(dim, dim, |i, j| if i == j { p * (1.0 - p) * (a[i] - b[i]).powi(2) } else { 0.0 })
            }
            DistributionSpec::Mixture { components, weights } => {
                let mean = self.mean();
                let second = components.iter().zip(weights).fold(DMatrix::zeros(dim, dim), |acc, (c, w)| {
                    let m = c.mean();
                    acc + (c.covariance() + &m * m.transpose()) * *w
                });
                second - &mean * mean.transpose()
            }
        }
    }
}

fn identity_rows(dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

fn finite(values: &[f64], what: &'static str) -> Result<(), SpecError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SpecError::NonFinite(what))
    }
}

fn spd_factor(rows: &[Vec<f64>], dim: usize, what: &'static str) -> Result<CholeskyFactor, SpecError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(SpecError::Shape(what));
    }
    for r in rows {
        finite(r, what)?;
    }
    cholesky(&matrix(rows)).map_err(|_| SpecError::NotPositiveDefinite)
}

/// A validated spec with its factorizations precomputed.
#[derive(Debug, Clone)]
pub enum Sampler {
    Gaussian { mean: Vec<f64>, lower: DMatrix<f64> },
    UniformBox { lo: Vec<f64>, width: Vec<f64> },
    StudentT { lower: DMatrix<f64>, dof: f64, chi: ChiSquared<f64> },
    TwoPoint { a: Vec<f64>, b: Vec<f64>, p: f64 },
    Mixture { components: Vec<Sampler>, pick: WeightedIndex<f64> },
}

impl Sampler {
    pub fn new(spec: &DistributionSpec) -> Result<Self, SpecError> {
        let dim = spec.dim();
        if dim == 0 {
            return Err(SpecError::EmptyDimension);
        }
        Ok(match spec {
            DistributionSpec::Gaussian { mean, covariance } => {
                finite(mean, "gaussian mean")?;
                let factor = spd_factor(covariance, dim, "gaussian covariance")?;
                Sampler::Gaussian {
                    mean: mean.clone(),
                    lower: factor.lower().clone(),
                }
            }
            DistributionSpec::UniformBox { lo, hi } => {
                if hi.len() != dim {
                    return Err(SpecError::Shape("uniform_box"));
                }
                finite(lo, "uniform_box lo")?;
                finite(hi, "uniform_box hi")?;
                if lo.iter().zip(hi).any(|(l, h)| l >= h) {
                    return Err(SpecError::EmptyBox);
                }
                Sampler::UniformBox {
                    lo: lo.clone(),
                    width: lo.iter().zip(hi).map(|(l, h)| h - l).collect(),
                }
            }
            DistributionSpec::StudentT { dof, scale } => {
                if !(dof.is_finite() && *dof > 2.0) {
                    return Err(SpecError::DegreesOfFreedom(*dof));
                }
                let factor = spd_factor(scale, dim, "student_t scale")?;
                Sampler::StudentT {
                    lower: factor.lower().clone(),
                    dof: *dof,
                    chi: ChiSquared::new(*dof).map_err(|_| SpecError::DegreesOfFreedom(*dof))?,
                }
            }
            DistributionSpec::TwoPoint { a, b, p } => {
                if b.len() != dim {
                    return Err(SpecError::Shape("two_point"));
                }
                finite(a, "two_point a")?;
                finite(b, "two_point b")?;
                if !(0.0..=1.0).contains(p) {
                    return Err(SpecError::Probability(*p));
                }
                Sampler::TwoPoint {
                    a: a.clone(),
                    b: b.clone(),
                    p: *p,
                }
            }
            DistributionSpec::Mixture { components, weights } => {
                if components.is_empty() || components.len() != weights.len() {
                    return Err(SpecError::Shape("mixture"));
                }
                if components.iter().any(|c| c.dim() != dim) {
                    return Err(SpecError::Shape("mixture"));
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(SpecError::Weights);
                }
                Sampler::Mixture {
                    components: components.iter().map(Sampler::new).collect::<Result<_, _>>()?,
                    pick: WeightedIndex::new(weights).map_err(|_| SpecError::Weights)?,
                }
            }
        })
    }

    /// Writes one draw into `out`, whose length is the dimension.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Sampler::Gaussian { mean, lower } => {
                correlated_normal(rng, lower, out);
                for (o, m) in out.iter_mut().zip(mean) {
                    *o += m;
                }
            }
            Sampler::UniformBox { lo, width } => {
                for ((o, l), w) in out.iter_mut().zip(lo).zip(width) {
                    *o = l + w * rng.random::<f64>();
                }
            }
            Sampler::StudentT { lower, dof, chi } => {
                correlated_normal(rng, lower, out);
                let scale = (dof / chi.sample(rng)).sqrt();
                for o in out.iter_mut() {
                    *o *= scale;
                }
            }
            Sampler::TwoPoint { a, b, p } => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = if rng.random::<f64>() < *p { a[j] } else { b[j] };
                }
            }
            Sampler::Mixture { components, pick } => {
                let c = pick.sample(rng);
                components[c].sample_into(rng, out);
            }
        }
    }
}

/// `out = L z` with `z` standard normal, `L` lower triangular.
fn correlated_normal<R: Rng + ?Sized>(rng: &mut R, lower: &DMatrix<f64>, out: &mut [f64]) {
    let dim = out.len();
    let mut z = [0.0f64; 16];
    let mut heap = Vec::new();
    let z: &mut [f64] = if dim <= z.len() {
        &mut z[..dim]
    } else {
        heap.resize(dim, 0.0);
        &mut heap
    };
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for i in 0..dim {
        out[i] = (0..=i).map(|k| lower[(i, k)] * z[k]).sum();
    }
}

/// The generator for one stream of a run.
pub fn stream_rng(seed: u64, stream_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

pub fn draw(spec: &DistributionSpec, seed: u64, stream_index: u64, count: usize) -> Result<Vec<Vec<f64>>, SpecError> {
    let sampler = Sampler::new(spec)?;
    let mut rng = stream_rng(seed, stream_index);
    let dim = spec.dim();
    Ok((0..count)
        .map(|_| {
            let mut x = vec![0.0; dim];
            sampler.sample_into(&mut rng, &mut x);
            x
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub spec: DistributionSpec,
    pub dim: usize,
    pub count: u64,
    pub lambda_sq: Quantity,
    pub trials: u64,
    pub seed: u64,
    pub events: u64,
    /// Singular trials that were redrawn.
    pub rejected: u64,
    pub empirical_frequency: f64,
    pub bound: BoundValue,
    pub mc_stderr: f64,
    /// `SLACK_SIGMAS · mc_stderr`.
    pub slack: f64,
    pub pass: bool,
}

/// Estimates `P[q_N ≥ λ²]` over `trials` independent runs of `count + 1`
/// draws, where `q_N` is the Mahalanobis distance of the last draw under the
/// mean and unbiased covariance of the first `count`. Trials whose covariance
/// is singular are redrawn within the same stream.
pub fn validate_bound(
    spec: &DistributionSpec,
    count: u64,
    lambda_sq: &Quantity,
    trials: u64,
    seed: u64,
) -> Result<SimulationReport, SimulationError> {
    let sampler = Sampler::new(spec)?;
    let dim = spec.dim();
    let bound = empirical_bound(&BoundQuery::new(dim, count, lambda_sq.clone())?)?;
    if trials == 0 {
        return Err(SimulationError::InvalidInput("trials must be positive"));
    }
    let threshold = lambda_sq.to_f64();
    let n = usize::try_from(count).map_err(|_| SimulationError::InvalidInput("count too large"))?;

    let (events, rejected) = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; dim],
            |buf, trial| -> Result<(u64, u64), SimulationError> {
                let mut rng = stream_rng(seed, trial);
                for retry in 0..MAX_TRIAL_RETRIES {
                    let mut stats = SampleStats::new(dim)?;
                    for _ in 0..n {
                        sampler.sample_into(&mut rng, buf);
                        stats.update(buf)?;
                    }
                    sampler.sample_into(&mut rng, buf);
                    match MahalanobisFrame::from_stats(&stats) {
                        Ok(frame) => {
                            let q = frame.mahalanobis_sq(buf)?;
                            return Ok((u64::from(q >= threshold), u64::from(retry)));
                        }
                        Err(CoreError::SingularCovariance { .. }) => continue,
                        Err(e) => return Err(e.into()),
                    }
                }
                Err(SimulationError::PersistentSingularity {
                    trial,
                    retries: MAX_TRIAL_RETRIES,
                })
            },
        )
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;

    let limit = (MAX_REJECTION_RATE * trials as f64).floor() as u64;
    if rejected > limit {
        return Err(SimulationError::TooManyRejections { rejected, trials, limit });
    }
    let f = events as f64 / trials as f64;
    let mc_stderr = (f * (1.0 - f) / trials as f64).sqrt();
    let slack = SLACK_SIGMAS * mc_stderr;
    Ok(SimulationReport {
        spec: spec.clone(),
        dim,
        count,
        lambda_sq: lambda_sq.clone(),
        trials,
        seed,
        events,
        rejected,
        empirical_frequency: f,
        pass: f <= bound.value + slack,
        bound,
        mc_stderr,
        slack,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub count: u64,
    pub bound: BoundValue,
    pub limit: BoundValue,
    pub gap: f64,
    /// `|bound - limit|` on the exact path.
    pub gap_exact: Option<BigRational>,
}

/// Finite-sample bound against its `N → ∞` limit `min{1, n/λ²}`.
pub fn convergence_sweep(dim: usize, lambda_sq: &Quantity, counts: &[u64]) -> Result<Vec<ConvergenceRow>, SimulationError> {
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimulationError::InvalidInput("counts must be strictly increasing"));
    }
    let limit = asymptotic_bound(dim, lambda_sq)?;
    counts
        .iter()
        .map(|&count| {
            let bound = empirical_bound(&BoundQuery::new(dim, count, lambda_sq.clone())?)?;
            let gap_exact = match (&bound.rational, &limit.rational) {
                (Some(b), Some(l)) => Some((b - l).abs()),
                _ => None,
            };
            let gap = match &gap_exact {
                Some(g) => g.to_f64().unwrap_or(f64::INFINITY),
                None => (bound.value - limit.value).abs(),
            };
            Ok(ConvergenceRow {
                count,
                bound,
                limit: limit.clone(),
                gap,
                gap_exact,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub dim: usize,
    pub n_plus_1: usize,
    /// Grid points where more vectors reached `k²` than the counting bound allows.
    pub violations: u64,
    /// `‖Σ u_i‖`.
    pub sum_norm: f64,
    /// `‖Σ u_i u_iᵀ - (N+1) I‖_F`.
    pub second_moment_error: f64,
    pub redraws: u32,
}

/// Whitens `n_plus_1` standard Gaussian draws and checks, for every `k²` in
/// `k_sq_grid`, that at most `⌊n(N+1)/k²⌋` of them have `‖u_i‖² ≥ k²`.
pub fn lemma1_trial(dim: usize, n_plus_1: usize, k_sq_grid: &[f64], seed: u64) -> Result<Lemma1Report, SimulationError> {
    lemma1_trial_with(&DistributionSpec::standard_gaussian(dim), n_plus_1, k_sq_grid, seed)
}

pub fn lemma1_trial_with(
    spec: &DistributionSpec,
    n_plus_1: usize,
    k_sq_grid: &[f64],
    seed: u64,
) -> Result<Lemma1Report, SimulationError> {
    let dim = spec.dim();
    if n_plus_1 < dim + 1 {
        return Err(SimulationError::InvalidInput("need at least dim + 1 samples to whiten"));
    }
    let mut redraws = 0;
    let u = loop {
        let samples = draw(spec, seed, u64::from(redraws), n_plus_1)?;
        match whiten(&samples) {
            Ok(u) => break u,
            Err(CoreError::SingularCovariance { .. }) if redraws + 1 < MAX_TRIAL_RETRIES => redraws += 1,
            Err(CoreError::SingularCovariance { .. }) => {
                return Err(SimulationError::PersistentSingularity {
                    trial: 0,
                    retries: MAX_TRIAL_RETRIES,
                })
            }
            Err(e) => return Err(e.into()),
        }
    };

    let mut sum = DVector::zeros(dim);
    let mut second = DMatrix::zeros(dim, dim);
    for ui in &u {
        let v = DVector::from_column_slice(ui);
        sum += &v;
        second += &v * v.transpose();
    }
    let second_moment_error = (second - DMatrix::identity(dim, dim) * n_plus_1 as f64).norm();

    let norms: Vec<f64> = u.iter().map(|ui| ui.iter().map(|x| x * x).sum()).collect();
    let mut violations = 0;
    for &k_sq in k_sq_grid {
        let limit = counting_bound(dim, n_plus_1 as u64, &Quantity::Float(k_sq))?;
        let hits = norms.iter().filter(|&&n| n >= k_sq).count() as u64;
        if num_bigint::BigUint::from(hits) > limit {
            violations += 1;
        }
    }
    Ok(Lemma1Report {
        dim,
        n_plus_1,
        violations,
        sum_norm: sum.norm(),
        second_moment_error,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments_converge() {
        let spec = DistributionSpec::standard_gaussian(2);
        let xs = draw(&spec, 7, 0, 100_000).unwrap();
        let stats = SampleStats::from_samples(2, &xs).unwrap();
        assert!(stats.mean().norm() < 0.02);
        let cov = stats.covariance(empcheb_core::CovarianceKind::Unbiased).unwrap();
        assert!((cov - DMatrix::identity(2, 2)).norm() < 0.03);
    }

    #[test]
    fn draws_are_reproducible_per_stream() {
        let spec = DistributionSpec::student_t(3, 3.0);
        assert_eq!(draw(&spec, 1, 5, 50).unwrap(), draw(&spec, 1, 5, 50).unwrap());
        assert_ne!(draw(&spec, 1, 5, 50).unwrap(), draw(&spec, 1, 6, 50).unwrap());
        assert_ne!(draw(&spec, 1, 5, 50).unwrap(), draw(&spec, 2, 5, 50).unwrap());
    }

    #[test]
    fn degenerate_two_point_repeats_its_value() {
        let spec = DistributionSpec::two_point(vec![1.5, -2.0], vec![1.5, -2.0], 0.3);
        assert!(draw(&spec, 3, 0, 100).unwrap().iter().all(|x| x == &[1.5, -2.0]));
    }

    #[test]
    fn spec_validation() {
        assert_eq!(DistributionSpec::student_t(2, 2.0).validate(), Err(SpecError::DegreesOfFreedom(2.0)));
        assert_eq!(
            DistributionSpec::UniformBox { lo: vec![0.0], hi: vec![0.0] }.validate(),
            Err(SpecError::EmptyBox)
        );
        assert_eq!(
            DistributionSpec::two_point(vec![0.0], vec![1.0], 1.5).validate(),
            Err(SpecError::Probability(1.5))
        );
        let bad_cov = DistributionSpec::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert_eq!(bad_cov.validate(), Err(SpecError::NotPositiveDefinite));
        let mix = DistributionSpec::Mixture {
            components: vec![DistributionSpec::standard_gaussian(1), DistributionSpec::unit_box(1)],
            weights: vec![0.5, 0.6],
        };
        assert_eq!(mix.validate(), Err(SpecError::Weights));
        assert_eq!(DistributionSpec::standard_gaussian(0).validate(), Err(SpecError::EmptyDimension));
    }

    #[test]
    fn population_moments() {
        let spec = DistributionSpec::two_point(vec![0.0, 2.0], vec![1.0, -2.0], 0.25);
        assert_eq!(spec.mean(), DVector::from_vec(vec![0.75, -1.0]));
        assert_eq!(spec.covariance(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.1875, 3.0])));
        let t = DistributionSpec::student_t(2, 4.0);
        assert_eq!(t.covariance(), DMatrix::identity(2, 2) * 2.0);
        let mix = DistributionSpec::Mixture {
            components: vec![
                DistributionSpec::Gaussian { mean: vec![-1.0], covariance: vec![vec![1.0]] },
                DistributionSpec::Gaussian { mean: vec![1.0], covariance: vec![vec![1.0]] },
            ],
            weights: vec![0.5, 0.5],
        };
        assert_eq!(mix.mean()[0], 0.0);
        assert_eq!(mix.covariance()[(0, 0)], 2.0);
    }

    #[test]
    fn always_singular_spec_is_degenerate() {
        let spec = DistributionSpec::two_point(vec![0.0, 0.0], vec![1.0, 1.0], 1.0);
        let err = validate_bound(&spec, 20, &Quantity::integer(4), 1000, 1).unwrap_err();
        assert!(matches!(err, SimulationError::PersistentSingularity { .. }));
    }

    #[test]
    fn gaussian_validation_passes() {
        let spec = DistributionSpec::standard_gaussian(2);
        let report = validate_bound(&spec, 20, &Quantity::integer(4), 20_000, 11).unwrap();
        assert!(report.pass);
        assert_eq!(report.bound.rational.clone().unwrap(), BigRational::new(12.into(), 21.into()));
        assert!(report.events <= report.trials);
        assert_eq!(report.rejected, 0);
    }

    #[test]
    fn far_tail_is_nearly_empty() {
        let spec = DistributionSpec::standard_gaussian(2);
        let report = validate_bound(&spec, 100, &Quantity::integer(1_000_000), 2_000, 3).unwrap();
        assert_eq!(report.events, 0);
        assert!(report.pass);
    }

    #[test]
    fn convergence_gap_shrinks() {
        let counts = [100, 1_000, 10_000, 100_000, 1_000_000];
        let rows = convergence_sweep(2, &Quantity::integer(4), &counts).unwrap();
        assert!(rows.windows(2).all(|w| w[1].gap <= w[0].gap));
        assert!(rows.last().unwrap().gap <= 1e-5);

        let saturated = convergence_sweep(3, &Quantity::integer(2), &counts).unwrap();
        assert!(saturated.iter().all(|r| r.gap == 0.0 && r.bound.is_saturated()));
        assert!(convergence_sweep(1, &Quantity::integer(9), &[10, 10]).is_err());
    }

    #[test]
    fn lemma1_extremes() {
        let n_plus_1 = 30;
        let dim = 3;
        let top = (dim * n_plus_1) as f64;
        let r = lemma1_trial(dim, n_plus_1, &[top, top * 1.01, 0.5, 1.0, 4.0], 9).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.sum_norm < 1e-10 * (n_plus_1 as f64).sqrt());
    }
}
