//! Distribution-free tail bounds for a new sample judged against the empirical
//! mean and covariance of the `N` samples before it.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery:
//!
//! * [`stats`]: exact streaming mean / scatter estimation with merge.
//! * [`bounds`]: closed-form probability bounds, evaluated on an exact rational
//!   path whenever the radius is rational, plus inversion and sample sizing.
//! * [`geometry`]: Cholesky factors, Mahalanobis distances, confidence
//!   ellipsoids, whitening and LMI certificates for the known-moment limit.
//! * [`detector`]: a streaming outlier detector built on the above.
//!
//! IO, file formats, random sampling and the CLI live in the `empcheb` crate.
#![no_std]

extern crate alloc;

pub mod bounds;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod quantity;
pub mod stats;

pub use bounds::{BoundQuery, BoundValue, Formula, Inversion, SampleSize, Threshold};
pub use detector::{Detector, DetectorConfig, OutlierVerdict, Target, UpdatePolicy, VerdictReport};
pub use error::{Error, Result};
pub use geometry::{CertificateBranch, CertificateReport, CholeskyFactor, ConfidenceEllipsoid, MahalanobisFrame};
pub use quantity::Quantity;
pub use stats::{CovarianceKind, SampleStats};
