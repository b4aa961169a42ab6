#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Literal transcription of the empirical bound with rational operations
/// (no integer numerator/denominator shortcut).
pub fn oracle_bound(dim: u64, count: u64, lambda_sq: &BigRational) -> BigRational {
    let n = BigRational::from_integer(BigInt::from(dim));
    let big_n = BigRational::from_integer(BigInt::from(count));
    let one = BigRational::from_integer(BigInt::from(1));
    let arg = &n * (&big_n + &one) * (&big_n * &big_n - &one + &big_n * lambda_sq)
        / (&big_n * &big_n * lambda_sq);
    let value = BigRational::from_integer(arg.floor().to_integer()) / (&big_n + &one);
    if value > one {
        one
    } else {
        value
    }
}

pub fn gaussian(rng: &mut impl Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Correlated, shifted, heavy-tailed samples.
pub fn messy(rng: &mut impl Rng, dim: usize, count: usize, offset: f64) -> Vec<Vec<f64>> {
    let t = StudentT::new(3.0).unwrap();
    let mix = random_matrix(rng, dim);
    (0..count)
        .map(|_| {
            let z = DVector::from_fn(dim, |_, _| t.sample(rng));
            let x = &mix * z;
            x.iter().map(|v| v + offset).collect()
        })
        .collect()
}

pub fn random_matrix(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, dim);
    &a * a.transpose() + DMatrix::identity(dim, dim)
}

pub fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    random_matrix(rng, dim).qr().q()
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
