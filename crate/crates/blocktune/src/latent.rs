//! The 1-D latent parameterization of the sparsity knobs.
//!
//! A single scalar `s` in `[0, 1]` is mapped linearly onto the triple
//! `(tau_keep, theta, lambda)`. `s = 0` is the most conservative corner
//! (keep everything, prune nothing) and `s = 1` the most aggressive one,
//! so block sparsity is non-decreasing along the line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the latent line, guaranteed inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPoint(f64);

impl LatentPoint {
    pub fn new(s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) || s.is_nan() {
            return Err(Error::LatentOutOfRange(s));
        }
        Ok(LatentPoint(s))
    }

    /// Clamp into `[0, 1]`; used where the value is derived (e.g. the 10%
    /// fallback reduction) and cannot legitimately escape the box.
    pub fn clamped(s: f64) -> Self {
        LatentPoint(s.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// The sparsity-controlling triple.
///
/// * `tau_keep`: top-CDF keep mass — per query block, the minimal set of
///   highest pooled-attention key blocks whose cumulative softmax mass
///   reaches `tau_keep` is kept.
/// * `theta`: self-similarity threshold; a block may only be pruned when
///   both its query and key block are at least this coherent.
/// * `lambda`: log-space skip threshold (non-positive); a kept tile is
///   still skipped when its max logit falls more than `|lambda|` below
///   the query block's max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseParams {
    pub tau_keep: f64,
    pub theta: f64,
    pub lambda: f64,
}

/// The box the triple lives in, and the endpoints of the latent line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentBounds {
    pub tau_min: f64,
    pub tau_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for LatentBounds {
    fn default() -> Self {
        LatentBounds {
            tau_min: 0.9,
            tau_max: 1.0,
            theta_min: 0.0,
            theta_max: 0.376,
            lambda_min: -42.0,
            lambda_max: 0.0,
        }
    }
}

impl LatentBounds {
    /// Reject empty intervals and positive skip thresholds. A positive
    /// `lambda_max` would allow skipping the pair that achieves the block
    /// max, which the simulator relies on never happening.
    pub fn validate(&self) -> Result<()> {
        let check = |min: f64, max: f64, name: &str| -> Result<()> {
            if !min.is_finite() || !max.is_finite() || min >= max {
                return Err(Error::InvalidBounds(format!(
                    "{name}: need min < max, got [{min}, {max}]"
                )));
            }
            Ok(())
        };
        check(self.tau_min, self.tau_max, "tau")?;
        check(self.theta_min, self.theta_max, "theta")?;
        check(self.lambda_min, self.lambda_max, "lambda")?;
        if self.lambda_max > 0.0 {
            return Err(Error::InvalidBounds(format!(
                "lambda_max must be <= 0, got {}",
                self.lambda_max
            )));
        }
        if !(0.0..=1.0).contains(&self.tau_min) || !(0.0..=1.0).contains(&self.tau_max) {
            return Err(Error::InvalidBounds(
                "tau bounds must lie in [0, 1]".to_string(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: &SparseParams) -> bool {
        let eps = 1e-12;
        p.tau_keep >= self.tau_min - eps
            && p.tau_keep <= self.tau_max + eps
            && p.theta >= self.theta_min - eps
            && p.theta <= self.theta_max + eps
            && p.lambda >= self.lambda_min - eps
            && p.lambda <= self.lambda_max + eps
    }
}

/// Linear latent map. `tau_keep` and `theta` decrease with `s`, `lambda`
/// increases, so all three push sparsity the same direction.
pub fn map_s_to_params(s: f64, bounds: &LatentBounds) -> Result<SparseParams> {
    let s = LatentPoint::new(s)?.value();
    Ok(SparseParams {
        tau_keep: bounds.tau_max - s * (bounds.tau_max - bounds.tau_min),
        theta: bounds.theta_max - s * (bounds.theta_max - bounds.theta_min),
        lambda: bounds.lambda_min + s * (bounds.lambda_max - bounds.lambda_min),
    })
}
