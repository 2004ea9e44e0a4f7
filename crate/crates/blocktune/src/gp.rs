//! 1-D Gaussian process regression over the latent line, with the
//! Matérn 5/2 kernel, Expected Improvement acquisition, and extraction
//! of probably-feasible (low-UCB) regions for the refinement stage.
//!
//! Targets are standardized before fitting (the fixed length scale is
//! only meaningful on a normalized scale) and the kernel diagonal carries
//! a small conditioning noise. Evaluations are deterministic in the
//! simulator, so the noise is not modelling anything — warm-start
//! pseudo-observations inflate it per-observation instead.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::latent::LatentPoint;

/// Acquisition grid resolution; the domain is 1-D and bounded, so an
/// exhaustive grid is exact to 0.001 and branch-free.
pub const ACQUISITION_GRID: usize = 1001;

pub const DEFAULT_LENGTH_SCALE: f64 = 0.2;
pub const DEFAULT_NOISE_VAR: f64 = 1e-6;
pub const DEFAULT_UCB_BETA: f64 = 1.0;

/// Matérn 5/2 kernel:
/// `(1 + √5 r/l + 5 r²/(3 l²)) exp(-√5 r/l)` with `r = |s - s'|`.
pub fn matern52(s: f64, s_prime: f64, length_scale: f64) -> f64 {
    debug_assert!(length_scale > 0.0);
    let r = (s - s_prime).abs();
    let a = 5.0_f64.sqrt() * r / length_scale;
    (1.0 + a + a * a / 3.0) * (-a).exp()
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the Zelen–Severo polynomial (|err| < 7.5e-8).
pub fn normal_cdf(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_cdf(-z);
    }
    let t = 1.0 / (1.0 + 0.2316419 * z);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    1.0 - normal_pdf(z) * poly
}

/// One data point on the latent line. `noise_scale` multiplies the model
/// noise variance for this observation; warm-start pseudo-observations
/// use an inflated scale so fresh data dominates them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub s: f64,
    pub y: f64,
    pub noise_scale: f64,
}

impl Observation {
    pub fn new(s: f64, y: f64) -> Self {
        Observation {
            s,
            y,
            noise_scale: 1.0,
        }
    }

    pub fn with_noise_scale(s: f64, y: f64, noise_scale: f64) -> Self {
        Observation { s, y, noise_scale }
    }
}

/// Fitted GP state. Immutable after `fit`; refitting with an appended
/// observation is exactly a fresh fit (no incremental updates).
#[derive(Debug, Clone)]
pub struct GpModel {
    obs: Vec<Observation>,
    length_scale: f64,
    noise_var: f64,
    y_mean: f64,
    y_std: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Fit on at least one observation. Duplicate `s` values are fine —
    /// the diagonal noise absorbs them. Cholesky failures escalate
    /// through jitter up to 1e-6 before giving up.
    pub fn fit(observations: Vec<Observation>, length_scale: f64, noise_var: f64) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::ContractViolation(
                "GP fit needs at least one observation".into(),
            ));
        }
        if length_scale <= 0.0 {
            return Err(Error::NumericFailure("length scale must be > 0".into()));
        }
        let n = observations.len();
        let y_mean = observations.iter().map(|o| o.y).sum::<f64>() / n as f64;
        let var = observations
            .iter()
            .map(|o| (o.y - y_mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let y_std = var.sqrt().max(1e-12);

        let y_std_vec =
            DVector::from_iterator(n, observations.iter().map(|o| (o.y - y_mean) / y_std));

        for jitter in [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6] {
            let k = DMatrix::from_fn(n, n, |i, j| {
                let base = matern52(observations[i].s, observations[j].s, length_scale);
                if i == j {
                    base + noise_var * observations[i].noise_scale + jitter
                } else {
                    base
                }
            });
            if let Some(chol) = Cholesky::new(k) {
                let alpha = chol.solve(&y_std_vec);
                return Ok(GpModel {
                    obs: observations,
                    length_scale,
                    noise_var,
                    y_mean,
                    y_std,
                    chol,
                    alpha,
                });
            }
        }
        Err(Error::NumericFailure(
            "kernel matrix not positive definite after jitter escalation".into(),
        ))
    }

    /// Posterior mean and variance at `s`, on the original target scale.
    /// Variance is clamped at zero against round-off.
    pub fn posterior(&self, s: f64) -> (f64, f64) {
        let n = self.obs.len();
        let k_star = DVector::from_iterator(
            n,
            self.obs
                .iter()
                .map(|o| matern52(s, o.s, self.length_scale)),
        );
        let mu_std = k_star.dot(&self.alpha);
        let solved = self.chol.solve(&k_star);
        let var_std = (1.0 - k_star.dot(&solved)).max(0.0);
        (
            self.y_mean + self.y_std * mu_std,
            self.y_std * self.y_std * var_std,
        )
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    /// Best (lowest) observed target, the incumbent for EI.
    pub fn best_observed(&self) -> f64 {
        self.obs.iter().map(|o| o.y).fold(f64::INFINITY, f64::min)
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }
}

/// Expected Improvement below the incumbent `f_best`:
/// `EI = (f_best - mu) Φ(Z) + sigma φ(Z)`, `Z = (f_best - mu) / sigma`.
/// At `sigma = 0` this degenerates to `max(f_best - mu, 0)`.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    let gap = f_best - mu;
    if sigma <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Deterministic EI argmax over the acquisition grid, ties broken toward
/// larger `s` (higher sparsity potential).
pub fn propose_next(model: &GpModel, f_best: f64) -> LatentPoint {
    let mut best_s = 0.0;
    let mut best_ei = f64::NEG_INFINITY;
    for i in 0..ACQUISITION_GRID {
        let s = i as f64 / (ACQUISITION_GRID - 1) as f64;
        let (mu, var) = model.posterior(s);
        let ei = expected_improvement(mu, var.sqrt(), f_best);
        if ei >= best_ei {
            best_ei = ei;
            best_s = s;
        }
    }
    LatentPoint::clamped(best_s)
}

/// A candidate interval of the latent line worth refining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub s_low: f64,
    pub s_high: f64,
}

impl Region {
    pub fn width(&self) -> f64 {
        self.s_high - self.s_low
    }
}

/// Extract up to three maximal grid runs where `mu + beta * sigma` stays
/// under `eps_high` — intervals that are probably feasible. Runs split by
/// a single grid point are merged; runs are ranked by `s_high`
/// descending, because the objective prefers the highest feasible
/// sparsity. If nothing qualifies, fall back to a half-width-0.1 interval
/// around the posterior-mean argmin.
pub fn extract_low_ucb_regions(model: &GpModel, eps_high: f64, beta: f64) -> Vec<Region> {
    let n = ACQUISITION_GRID;
    let step = 1.0 / (n - 1) as f64;
    let mut feasible = vec![false; n];
    let mut mu_grid = vec![0.0; n];
    for i in 0..n {
        let s = i as f64 * step;
        let (mu, var) = model.posterior(s);
        mu_grid[i] = mu;
        feasible[i] = mu + beta * var.sqrt() <= eps_high;
    }

    // Bridge single-point gaps.
    for i in 1..n - 1 {
        if !feasible[i] && feasible[i - 1] && feasible[i + 1] {
            feasible[i] = true;
        }
    }

    let mut regions = Vec::new();
    let mut i = 0;
    while i < n {
        if feasible[i] {
            let start = i;
            while i + 1 < n && feasible[i + 1] {
                i += 1;
            }
            if i > start {
                regions.push(Region {
                    s_low: start as f64 * step,
                    s_high: i as f64 * step,
                });
            } else {
                // A single feasible grid point is still a maximal run;
                // give it one grid step of width so it can be bisected.
                regions.push(Region {
                    s_low: (start as f64 - 1.0) * step,
                    s_high: (start as f64 + 1.0) * step,
                });
            }
        }
        i += 1;
    }

    if regions.is_empty() {
        // Nothing probably-feasible; refine around the most promising
        // mean instead. Ties toward larger s, matching the acquisition.
        let mut best = 0;
        for i in 0..n {
            if mu_grid[i] <= mu_grid[best] {
                best = i;
            }
        }
        let center = best as f64 * step;
        return vec![Region {
            s_low: (center - 0.1).max(0.0),
            s_high: (center + 0.1).min(1.0),
        }];
    }

    regions.sort_by(|a, b| b.s_high.partial_cmp(&a.s_high).unwrap());
    regions.truncate(3);
    regions
}
