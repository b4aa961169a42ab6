//! Closed-form tail bounds and their inverses.
//!
//! For `N` i.i.d. samples with mean `m` and unbiased covariance `Λ`, and one
//! more sample `x` from the same distribution,
//!
//! ```text
//! P[(x - m)ᵀ Λ⁻¹ (x - m) ≥ λ²] ≤ min{1, ⌊n(N+1)(N² - 1 + Nλ²) / (N²λ²)⌋ / (N+1)}
//! ```
//!
//! where `n` is the dimension. With `λ² = p/q` the floor argument is
//! `n(N+1)(q(N²-1) + Np) / (N²p)`, a ratio of integers, so the floor is taken
//! in big-integer arithmetic and the result is exact. The float path is kept
//! for radii that are not representable as short decimals; it rounds
//! near-integer floor arguments up, which can only loosen the bound.
//!
//! Every function validates its inputs: `dim ≥ 1`, `count ≥ 2`, radii `> 0`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::quantity::{floor_int, Quantity};

/// Relative widening applied to an inverted radius so that the returned
/// threshold lies strictly inside the feasible region.
pub const INVERSION_SAFETY: f64 = 1e-12;

/// Float floor arguments within this (relative) distance below an integer are
/// rounded up to it.
pub const FLOAT_FLOOR_TOLERANCE: f64 = 1e-9;

/// Largest sample size [`min_sample_size`] will search.
pub const MAX_SAMPLE_SIZE: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formula {
    /// Finite-sample bound with the floor.
    Empirical,
    /// The empirical bound with the floor replaced by its argument.
    Simplified,
    /// Known-moment limit `min{1, n/λ²}`.
    Asymptotic,
    /// The scalar finite-sample bound of Saw, Yang and Mo.
    UnivariateSaw,
}

impl Formula {
    pub fn as_str(self) -> &'static str {
        match self {
            Formula::Empirical => "empirical",
            Formula::Simplified => "simplified",
            Formula::Asymptotic => "asymptotic",
            Formula::UnivariateSaw => "univariate_saw",
        }
    }
}

impl core::fmt::Display for Formula {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub dim: usize,
    pub count: u64,
    pub lambda_sq: Quantity,
}

impl BoundQuery {
    pub fn new(dim: usize, count: u64, lambda_sq: Quantity) -> Result<Self> {
        let query = Self { dim, count, lambda_sq };
        query.validate()?;
        Ok(query)
    }

    /// Query from a radius `λ` rather than `λ²`. Exact radii stay exact.
    pub fn from_lambda(dim: usize, count: u64, lambda: Quantity) -> Result<Self> {
        if !lambda.is_positive() {
            return Err(Error::InvalidRadius);
        }
        Self::new(dim, count, lambda.square())
    }

    fn validate(&self) -> Result<()> {
        check_dim(self.dim)?;
        check_count(self.count)?;
        check_radius(&self.lambda_sq)
    }
}

/// A probability bound and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    /// Exact value, present whenever `exact` is set.
    pub rational: Option<BigRational>,
    pub formula: Formula,
    pub exact: bool,
}

impl BoundValue {
    fn from_rational(r: BigRational, formula: Formula) -> Self {
        let r = clip_one(r);
        BoundValue {
            value: r.to_f64().unwrap_or(1.0),
            rational: Some(r),
            formula,
            exact: true,
        }
    }

    fn from_float(value: f64, formula: Formula) -> Self {
        BoundValue {
            value: value.min(1.0),
            rational: None,
            formula,
            exact: false,
        }
    }

    pub fn is_saturated(&self) -> bool {
        match &self.rational {
            Some(r) => r.is_one(),
            None => self.value >= 1.0,
        }
    }
}

pub fn empirical_bound(query: &BoundQuery) -> Result<BoundValue> {
    query.validate()?;
    let n_plus_1 = query.count + 1;
    Ok(match &query.lambda_sq {
        Quantity::Exact(l2) => {
            let floor = floor_argument_exact(query.dim, query.count, l2);
            BoundValue::from_rational(
                BigRational::new(floor, BigInt::from(n_plus_1)),
                Formula::Empirical,
            )
        }
        Quantity::Float(l2) => {
            let floor = conservative_floor(floor_argument_f64(query.dim, query.count, *l2));
            BoundValue::from_float(floor / n_plus_1 as f64, Formula::Empirical)
        }
    })
}

/// The floor of the empirical bound replaced by its argument. Never smaller
/// than [`empirical_bound`].
pub fn simplified_bound(query: &BoundQuery) -> Result<BoundValue> {
    query.validate()?;
    let n = query.dim as f64;
    let big_n = query.count as f64;
    Ok(match &query.lambda_sq {
        Quantity::Exact(l2) => {
            let (p, q) = (l2.numer(), l2.denom());
            let count = BigInt::from(query.count);
            let numer = BigInt::from(query.dim) * (q * (&count * &count - 1u32) + &count * p);
            let denom = &count * &count * p;
            BoundValue::from_rational(BigRational::new(numer, denom), Formula::Simplified)
        }
        Quantity::Float(l2) => {
            let value = n * ((big_n * big_n - 1.0) / (big_n * big_n * l2) + 1.0 / big_n);
            BoundValue::from_float(value, Formula::Simplified)
        }
    })
}

/// `min{1, n/λ²}`: the bound when the mean and covariance are known.
pub fn asymptotic_bound(dim: usize, lambda_sq: &Quantity) -> Result<BoundValue> {
    check_dim(dim)?;
    check_radius(lambda_sq)?;
    Ok(match lambda_sq {
        Quantity::Exact(l2) => BoundValue::from_rational(
            BigRational::from_integer(BigInt::from(dim)) / l2,
            Formula::Asymptotic,
        ),
        Quantity::Float(l2) => BoundValue::from_float(dim as f64 / l2, Formula::Asymptotic),
    })
}

/// The scalar finite-sample bound,
/// `min{1, ⌊(N+1)(N² - 1 + Nλ²) / (N²λ²)⌋ / (N+1)}`.
///
/// Evaluated through rational arithmetic on its own, not by calling
/// [`empirical_bound`] with `dim = 1`, so that the two can be compared.
pub fn saw_bound(count: u64, lambda_sq: &Quantity) -> Result<BoundValue> {
    check_count(count)?;
    check_radius(lambda_sq)?;
    let n_plus_1 = count + 1;
    Ok(match lambda_sq {
        Quantity::Exact(l2) => {
            let big_n = BigRational::from_integer(BigInt::from(count));
            let one = BigRational::one();
            let n1 = &big_n + &one;
            let arg = &n1 * (&big_n * &big_n - &one + &big_n * l2) / (&big_n * &big_n * l2);
            BoundValue::from_rational(
                BigRational::new(floor_int(&arg), BigInt::from(n_plus_1)),
                Formula::UnivariateSaw,
            )
        }
        Quantity::Float(l2) => {
            let big_n = count as f64;
            let arg = (big_n + 1.0) * (big_n * big_n - 1.0 + big_n * l2) / (big_n * big_n * l2);
            BoundValue::from_float(conservative_floor(arg) / n_plus_1 as f64, Formula::UnivariateSaw)
        }
    })
}

/// `k² = N²λ² / (N² - 1 + Nλ²)`: the radius on the whitened `N+1` samples
/// that corresponds to `λ²` on the Mahalanobis scale of the first `N`.
/// Always below `N`.
pub fn lambda_to_k(count: u64, lambda_sq: &Quantity) -> Result<Quantity> {
    check_count(count)?;
    check_radius(lambda_sq)?;
    let big_n = count as f64;
    Ok(match lambda_sq {
        Quantity::Exact(l2) => {
            let n = BigRational::from_integer(BigInt::from(count));
            let n2 = &n * &n;
            Quantity::Exact(&n2 * l2 / (&n2 - BigRational::one() + &n * l2))
        }
        Quantity::Float(l2) => Quantity::Float(big_n * big_n * l2 / (big_n * big_n - 1.0 + big_n * l2)),
    })
}

/// Inverse of [`lambda_to_k`]: `λ² = (N² - 1)k² / (N(N - k²))`, defined for
/// `0 < k² < N`.
pub fn k_to_lambda(count: u64, k_sq: &Quantity) -> Result<Quantity> {
    check_count(count)?;
    if !k_sq.is_positive() {
        return Err(Error::InvalidK);
    }
    let big_n = count as f64;
    match k_sq {
        Quantity::Exact(k2) => {
            let n = BigRational::from_integer(BigInt::from(count));
            if k2 >= &n {
                return Err(Error::InvalidK);
            }
            Ok(Quantity::Exact((&n * &n - BigRational::one()) * k2 / (&n * (&n - k2))))
        }
        Quantity::Float(k2) => {
            if *k2 >= big_n {
                return Err(Error::InvalidK);
            }
            Ok(Quantity::Float((big_n * big_n - 1.0) * k2 / (big_n * (big_n - k2))))
        }
    }
}

/// Upper bound `⌊n·N / k²⌋` on how many of `N` whitened vectors (zero sum,
/// second moment `N·I`) can have norm at least `k`. Not clipped to `N`.
pub fn counting_bound(dim: usize, count: u64, k_sq: &Quantity) -> Result<BigUint> {
    check_dim(dim)?;
    if !k_sq.is_positive() {
        return Err(Error::InvalidK);
    }
    let total = BigInt::from(dim as u64) * BigInt::from(count);
    let floor = match k_sq {
        Quantity::Exact(k2) => floor_int(&(BigRational::from_integer(total) / k2)),
        Quantity::Float(k2) => {
            let arg = total.to_f64().unwrap_or(f64::INFINITY) / k2;
            BigRational::from_float(conservative_floor(arg))
                .ok_or(Error::InvalidK)?
                .to_integer()
        }
    };
    Ok(floor.to_biguint().unwrap_or_default())
}

/// Smallest achievable empirical bound at this `(dim, count)`, the
/// `λ → ∞` limit `min{1, ⌊n(N+1)/N⌋ / (N+1)}`.
pub fn achievable_floor(dim: usize, count: u64) -> Result<BigRational> {
    check_dim(dim)?;
    check_count(count)?;
    let n1 = BigInt::from(count + 1);
    let limit = floor_int(&BigRational::new(BigInt::from(dim) * &n1, BigInt::from(count)));
    Ok(clip_one(BigRational::new(limit, n1)))
}

/// Radius at which the empirical bound first drops to `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub epsilon: f64,
    /// Largest admissible floor value, `⌊ε(N+1)⌋`.
    pub step: BigInt,
    /// Infimum of the feasible `λ²`. The bound at this exact value is one step
    /// above `epsilon`: the feasible set is the open ray beyond it.
    pub boundary_sq: BigRational,
    /// `√boundary_sq` rounded to the nearest float.
    pub lambda: f64,
}

impl Threshold {
    /// `λ·(1 + 1e-12)`: a float radius guaranteed to be feasible.
    pub fn safe_lambda(&self) -> f64 {
        self.lambda * (1.0 + INVERSION_SAFETY)
    }

    pub fn safe_lambda_sq(&self) -> f64 {
        let l = self.safe_lambda();
        l * l
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inversion {
    Feasible(Threshold),
    /// No radius reaches `epsilon` at this sample size.
    Infeasible { achievable: BigRational },
}

/// Smallest `λ` with `empirical_bound(dim, count, λ²) ≤ epsilon`.
///
/// The bound is a right-continuous step function that decreases in `λ²`. It
/// is at most `ε` exactly when the floor argument is below `m + 1` with
/// `m = ⌊ε(N+1)⌋`, which solves to
///
/// ```text
/// λ² > n(N+1)(N² - 1) / ((m+1)N² - nN(N+1))
/// ```
///
/// whenever the denominator is positive; otherwise no radius is feasible.
/// The boundary is computed exactly; use [`Threshold::safe_lambda`] for a
/// float radius that is strictly feasible.
pub fn invert_bound(dim: usize, count: u64, epsilon: f64) -> Result<Inversion> {
    check_dim(dim)?;
    check_count(count)?;
    let eps = check_probability(epsilon)?;

    let big_n = BigInt::from(count);
    let n1 = &big_n + 1u32;
    let n = BigInt::from(dim);
    let step = floor_int(&(eps * BigRational::from_integer(n1.clone())));
    let denom = (&step + 1u32) * &big_n * &big_n - &n * &big_n * &n1;
    if !denom.is_positive() {
        return Ok(Inversion::Infeasible {
            achievable: achievable_floor(dim, count)?,
        });
    }
    let numer = &n * &n1 * (&big_n * &big_n - 1u32);
    let boundary_sq = BigRational::new(numer, denom);
    let lambda = libm::sqrt(boundary_sq.to_f64().unwrap_or(f64::INFINITY));
    Ok(Inversion::Feasible(Threshold {
        epsilon,
        step,
        boundary_sq,
        lambda,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSize {
    Feasible {
        /// Smallest `N` with bound `≤ ε`.
        first: u64,
        /// Smallest `N` from which the bound stays `≤ ε` for every larger `N`.
        /// The bound oscillates in `N` (each floor step adds `1/(N+1)`), so
        /// this can exceed `first`.
        sustained: u64,
    },
    /// `n/λ² ≥ ε`: the limit of the bound itself is above the target.
    Infeasible { limit: BigRational },
}

/// Smallest sample count for which the empirical bound at `lambda_sq` is at
/// most `epsilon`.
///
/// The simplified bound dominates the empirical one and decreases in `N` once
/// `Nλ² ≥ 2`, so doubling plus bisection on it gives a count `N_s` beyond which
/// the target always holds. The exact bound is then scanned below `N_s`.
/// Cost is linear in `N_s`, capped at [`MAX_SAMPLE_SIZE`].
pub fn min_sample_size(dim: usize, lambda_sq: &Quantity, epsilon: f64) -> Result<SampleSize> {
    check_dim(dim)?;
    check_radius(lambda_sq)?;
    let eps = check_probability(epsilon)?;
    let l2 = lambda_sq.to_exact().ok_or(Error::InvalidRadius)?;

    let limit = BigRational::from_integer(BigInt::from(dim)) / &l2;
    if limit >= eps {
        return Ok(SampleSize::Infeasible { limit });
    }

    let n = BigInt::from(dim);
    let (p, q) = (l2.numer().clone(), l2.denom().clone());
    // n(q(N²-1) + Np) ≤ ε·N²p
    let simplified_ok = |count: u64| {
        let big_n = BigInt::from(count);
        let lhs = BigRational::from_integer(&n * (&q * (&big_n * &big_n - 1u32) + &big_n * &p));
        lhs <= &eps * BigRational::from_integer(&big_n * &big_n * &p)
    };
    // ⌊A(N)⌋ ≤ ε(N+1), i.e. the exact bound is at most ε.
    let exact_ok = |count: u64| {
        let floor = floor_argument_exact(dim, count, &l2);
        BigRational::from_integer(floor) <= &eps * BigRational::from_integer(BigInt::from(count + 1))
    };

    // Start where the simplified bound is monotone.
    let two_over_l2 = BigRational::from_integer(BigInt::from(2)) / &l2;
    let start = two_over_l2.ceil().to_integer().to_u64().unwrap_or(u64::MAX).max(2);
    if start > MAX_SAMPLE_SIZE {
        return Err(Error::SampleSizeTooLarge { limit: MAX_SAMPLE_SIZE });
    }
    let mut lo = start;
    let mut hi = start;
    while !simplified_ok(hi) {
        lo = hi + 1;
        hi = hi.saturating_mul(2);
        if hi > MAX_SAMPLE_SIZE {
            if simplified_ok(MAX_SAMPLE_SIZE) {
                hi = MAX_SAMPLE_SIZE;
                break;
            }
            return Err(Error::SampleSizeTooLarge { limit: MAX_SAMPLE_SIZE });
        }
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if simplified_ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }

    let mut sustained = hi;
    while sustained > 2 && exact_ok(sustained - 1) {
        sustained -= 1;
    }
    let first = (2..sustained).find(|&c| exact_ok(c)).unwrap_or(sustained);
    Ok(SampleSize::Feasible { first, sustained })
}

/// `⌊n(N+1)(q(N²-1) + Np) / (N²p)⌋` for `λ² = p/q`.
fn floor_argument_exact(dim: usize, count: u64, lambda_sq: &BigRational) -> BigInt {
    let (p, q) = (lambda_sq.numer(), lambda_sq.denom());
    let big_n = BigInt::from(count);
    let n2 = &big_n * &big_n;
    let numer = BigInt::from(dim) * (&big_n + 1u32) * (q * (&n2 - 1u32) + &big_n * p);
    let denom = n2 * p;
    // Both positive, so truncating division is the floor.
    numer / denom
}

fn floor_argument_f64(dim: usize, count: u64, lambda_sq: f64) -> f64 {
    let n = dim as f64;
    let big_n = count as f64;
    n * (big_n + 1.0) * ((big_n * big_n - 1.0) / (big_n * big_n * lambda_sq) + 1.0 / big_n)
}

/// Floor that rounds up when the argument is within tolerance below an
/// integer. A larger floor only loosens an upper bound.
fn conservative_floor(arg: f64) -> f64 {
    if !arg.is_finite() {
        return arg;
    }
    let floor = libm::floor(arg);
    if floor + 1.0 - arg <= FLOAT_FLOOR_TOLERANCE * arg.abs().max(1.0) {
        floor + 1.0
    } else {
        floor
    }
}

fn clip_one(r: BigRational) -> BigRational {
    if r > BigRational::one() {
        BigRational::one()
    } else {
        r
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidDimension)
    } else {
        Ok(())
    }
}

fn check_count(count: u64) -> Result<()> {
    if count < 2 {
        Err(Error::InvalidCount(count))
    } else {
        Ok(())
    }
}

fn check_radius(lambda_sq: &Quantity) -> Result<()> {
    if lambda_sq.is_positive() {
        Ok(())
    } else {
        Err(Error::InvalidRadius)
    }
}

fn check_probability(epsilon: f64) -> Result<BigRational> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidProbability);
    }
    BigRational::from_float(epsilon).ok_or(Error::InvalidProbability)
}
