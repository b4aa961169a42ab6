//! Streaming outlier detection.
//!
//! Each incoming sample is scored against the mean and unbiased covariance of
//! the samples accepted before it and flagged when its squared Mahalanobis
//! distance reaches the threshold. With an `epsilon` target the threshold is
//! re-derived at every step from the current sample count.
//!
//! The guarantee is marginal: for i.i.d. data, *each* verdict is a false alarm
//! with probability at most `bound_at_threshold`. Nothing is claimed about the
//! stream jointly, and the `InliersOnly` policy conditions the moments on past
//! verdicts, which voids the i.i.d. premise altogether.

use alloc::vec::Vec;

use crate::bounds::{self, BoundValue, Inversion};
use crate::error::{Error, Result};
use crate::geometry::{self, MahalanobisFrame};
use crate::stats::SampleStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// False-alarm probability in `(0, 1)`.
    Epsilon(f64),
    /// Fixed squared radius.
    LambdaSq(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdatePolicy {
    /// Every sample updates the moments.
    #[default]
    Always,
    /// Only unflagged samples update the moments. Not covered by the bound.
    InliersOnly,
    /// Moments are fixed once warmup completes.
    FrozenAfterWarmup,
}

impl UpdatePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdatePolicy::Always => "always",
            UpdatePolicy::InliersOnly => "inliers_only",
            UpdatePolicy::FrozenAfterWarmup => "frozen_after_warmup",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    dim: usize,
    target: Target,
    warmup: u64,
    policy: UpdatePolicy,
}

impl DetectorConfig {
    pub fn new(dim: usize, target: Target, warmup: u64, policy: UpdatePolicy) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension);
        }
        match target {
            Target::Epsilon(eps) if !(eps > 0.0 && eps < 1.0) => return Err(Error::InvalidProbability),
            Target::LambdaSq(l2) if !(l2 > 0.0 && l2.is_finite()) => return Err(Error::InvalidRadius),
            _ => {}
        }
        if warmup < dim as u64 + 1 {
            return Err(Error::InvalidConfig("warmup must be at least dim + 1"));
        }
        Ok(Self {
            dim,
            target,
            warmup,
            policy,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn warmup(&self) -> u64 {
        self.warmup
    }

    pub fn policy(&self) -> UpdatePolicy {
        self.policy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierVerdict {
    /// Zero-based position in the stream, warmup samples included.
    pub index: u64,
    pub distance_sq: f64,
    pub threshold_sq: f64,
    pub flagged: bool,
    /// Number of samples behind the mean and covariance used.
    pub stats_count: u64,
    pub bound_at_threshold: BoundValue,
}

pub const GUARANTEE: &str = "if this sample and the ones behind the estimate are i.i.d., \
a single test at this threshold flags a non-outlier with probability at most the bound";

/// Human-facing summary of a verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictReport {
    pub index: u64,
    pub flagged: bool,
    pub distance_sq: f64,
    pub threshold_sq: f64,
    pub stats_count: u64,
    pub bound: BoundValue,
    pub guarantee: &'static str,
}

pub fn explain_verdict(verdict: &OutlierVerdict) -> VerdictReport {
    VerdictReport {
        index: verdict.index,
        flagged: verdict.flagged,
        distance_sq: verdict.distance_sq,
        threshold_sq: verdict.threshold_sq,
        stats_count: verdict.stats_count,
        bound: verdict.bound_at_threshold.clone(),
        guarantee: GUARANTEE,
    }
}

impl core::fmt::Display for VerdictReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(
            f,
            "sample {}: {} (distance² {} vs threshold² {}, N = {})",
            self.index,
            if self.flagged { "outlier" } else { "inlier" },
            self.distance_sq,
            self.threshold_sq,
            self.stats_count
        )?;
        writeln!(f, "bound ({}): {}", self.bound.formula, self.bound.value)?;
        write!(f, "guarantee: {}", self.guarantee)
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    stats: SampleStats,
    seen: u64,
    /// Cached frame for the frozen policy.
    frozen: Option<(MahalanobisFrame, f64, BoundValue)>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Self {
        let stats = SampleStats::new(config.dim).expect("config dimension is validated");
        Self {
            config,
            stats,
            seen: 0,
            frozen: None,
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn stats(&self) -> &SampleStats {
        &self.stats
    }

    /// Feeds one sample. Returns `None` during warmup.
    pub fn push(&mut self, sample: &[f64]) -> Result<Option<OutlierVerdict>> {
        let index = self.seen;
        if index < self.config.warmup {
            self.stats.update(sample)?;
            self.seen += 1;
            if self.seen == self.config.warmup {
                self.check_warmup()?;
            }
            return Ok(None);
        }

        let (frame, threshold_sq, bound) = match &self.frozen {
            Some(cached) => cached.clone(),
            None => {
                let frame = self.frame()?;
                let (threshold_sq, bound) = self.threshold(self.stats.count())?;
                (frame, threshold_sq, bound)
            }
        };
        let distance_sq = frame.mahalanobis_sq(sample)?;
        let flagged = distance_sq >= threshold_sq;
        let verdict = OutlierVerdict {
            index,
            distance_sq,
            threshold_sq,
            flagged,
            stats_count: self.stats.count(),
            bound_at_threshold: bound,
        };

        match self.config.policy {
            UpdatePolicy::Always => self.stats.update(sample)?,
            UpdatePolicy::InliersOnly if !flagged => self.stats.update(sample)?,
            UpdatePolicy::InliersOnly => {}
            UpdatePolicy::FrozenAfterWarmup => {
                if self.frozen.is_none() {
                    self.frozen = Some((frame, verdict.threshold_sq, verdict.bound_at_threshold.clone()));
                }
            }
        }
        self.seen += 1;
        Ok(Some(verdict))
    }

    fn check_warmup(&self) -> Result<()> {
        match MahalanobisFrame::from_stats(&self.stats) {
            Ok(_) => {}
            Err(Error::SingularCovariance { .. }) => {
                return Err(Error::SingularAtWarmup {
                    warmup: self.config.warmup,
                })
            }
            Err(e) => return Err(e),
        }
        // Surface an unreachable epsilon before the first verdict.
        self.threshold(self.stats.count()).map(|_| ())
    }

    fn frame(&self) -> Result<MahalanobisFrame> {
        MahalanobisFrame::from_stats(&self.stats)
    }

    fn threshold(&self, count: u64) -> Result<(f64, BoundValue)> {
        let dim = self.config.dim;
        let threshold_sq = match self.config.target {
            Target::LambdaSq(l2) => l2,
            Target::Epsilon(eps) => match bounds::invert_bound(dim, count, eps)? {
                Inversion::Feasible(t) => t.safe_lambda_sq(),
                Inversion::Infeasible { achievable } => {
                    return Err(Error::InfeasibleEpsilon {
                        epsilon: eps,
                        count,
                        achievable: num_traits::ToPrimitive::to_f64(&achievable).unwrap_or(1.0),
                    })
                }
            },
        };
        Ok((threshold_sq, geometry::coverage_at(dim, count, threshold_sq)?))
    }
}

/// Runs a detector over a whole stream, one verdict per post-warmup sample.
pub fn detect_stream<S: AsRef<[f64]>>(stream: &[S], config: &DetectorConfig) -> Result<Vec<OutlierVerdict>> {
    let mut detector = Detector::new(config.clone());
    let mut verdicts = Vec::with_capacity(stream.len().saturating_sub(config.warmup as usize));
    for sample in stream {
        if let Some(v) = detector.push(sample.as_ref())? {
            verdicts.push(v);
        }
    }
    Ok(verdicts)
}
