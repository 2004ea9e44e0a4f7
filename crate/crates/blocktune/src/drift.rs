//! Runtime drift monitoring and adaptive re-calibration.
//!
//! Deployment streams batches through the cached configurations and
//! watches the per-batch worst-case error across heads. The trigger is a
//! majority rule: re-calibration fires when at least `majority` of the
//! last `window` batches violate `eps_high` (a literal run of 100
//! consecutive violations never fires under mild drift). A triggered
//! retune reruns the pipeline per head with the reduced budget (8
//! exploration evaluations, 2 bisections per region), warm-started from
//! the cached configuration.

use std::collections::VecDeque;

use crate::attention::{dense_attention, relative_l1};
use crate::cache::ConfigCache;
use crate::error::Result;
use crate::latent::SparseParams;
use crate::ledger::{CostLedger, TuneStage};
use crate::optimizer::{tune_head, TuneOptions, TuneResult, WarmStart};
use crate::sparse::{sparse_attention, Fidelity};
use crate::workload::{generate_head, Draw, StructureSpec, Workload};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    pub window: usize,
    /// Minimum violating batches within a full window.
    pub majority: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            window: 100,
            majority: 50,
        }
    }
}

/// Sliding window of per-batch worst-case errors.
#[derive(Debug, Clone)]
pub struct DriftMonitor {
    config: DriftConfig,
    window: VecDeque<f64>,
}

impl DriftMonitor {
    pub fn new(config: DriftConfig) -> Self {
        DriftMonitor {
            config,
            window: VecDeque::with_capacity(config.window),
        }
    }

    /// Record one batch; true when the trigger condition holds. The
    /// window must be full before the trigger can fire, so short streams
    /// (n < window) never trigger.
    pub fn observe(&mut self, worst_error: f64, eps_high: f64) -> bool {
        if self.window.len() == self.config.window {
            self.window.pop_front();
        }
        self.window.push_back(worst_error);
        self.window.len() == self.config.window
            && self.violations(eps_high) >= self.config.majority
    }

    pub fn violations(&self, eps_high: f64) -> usize {
        self.window.iter().filter(|e| **e > eps_high).count()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }
}

/// A distribution shift applied to the workload structure mid-stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureShift {
    pub bandwidth_scale: f64,
    pub extra_sinks: usize,
}

impl StructureShift {
    /// Doubling the locality bandwidth, the reference shift scenario.
    pub fn double_bandwidth() -> Self {
        StructureShift {
            bandwidth_scale: 2.0,
            extra_sinks: 0,
        }
    }

    pub fn apply(&self, spec: &StructureSpec) -> StructureSpec {
        StructureSpec {
            bandwidth: ((spec.bandwidth as f64 * self.bandwidth_scale).round() as usize).max(1),
            sinks: spec.sinks + self.extra_sinks,
            ..spec.clone()
        }
    }
}

/// One high-fidelity evaluation of fixed parameters on a given draw.
pub fn evaluate_config(
    spec: &StructureSpec,
    layer: usize,
    head: usize,
    params: &SparseParams,
    draw: Draw,
) -> Result<(f64, f64)> {
    let t = generate_head(spec, layer, head, Fidelity::High, draw)?;
    let grid = spec.grid(Fidelity::High)?;
    let dense = dense_attention(&t.q, &t.k, &t.v, spec.causal)?;
    let (out, sparsity) = sparse_attention(&t.q, &t.k, &t.v, params, &grid)?;
    Ok((relative_l1(&out, &dense)?, sparsity))
}

#[derive(Debug, Clone, Copy)]
pub struct BatchRecord {
    pub batch: usize,
    pub worst_error: f64,
    pub triggered: bool,
    /// True on the batch where re-calibration ran.
    pub retuned: bool,
}

#[derive(Debug)]
pub struct DriftOutcome {
    pub log: Vec<BatchRecord>,
    pub trigger_batch: Option<usize>,
    pub retuned: Option<Vec<TuneResult>>,
    /// Cache in effect after the stream (retuned when triggered).
    pub final_cache: ConfigCache,
}

/// Stream `batches` fresh inputs through the cached configurations,
/// optionally applying `shift` from batch `shift_at` on. On trigger,
/// retune once with the reduced budget and continue monitoring with the
/// updated cache.
pub fn run_drift(
    spec: &StructureSpec,
    cache: &ConfigCache,
    batches: usize,
    shift_at: Option<usize>,
    shift: StructureShift,
    monitor_config: DriftConfig,
    opts: &TuneOptions,
    ledger: &CostLedger,
) -> Result<DriftOutcome> {
    cache.validate()?;
    cache.check_compatible(spec)?;
    let shifted = shift.apply(spec);
    let mut monitor = DriftMonitor::new(monitor_config);
    let mut current = cache.clone();
    let mut log = Vec::with_capacity(batches);
    let mut trigger_batch = None;
    let mut retuned: Option<Vec<TuneResult>> = None;

    for batch in 0..batches {
        let effective = if shift_at.is_some_and(|t| batch >= t) {
            &shifted
        } else {
            spec
        };
        let mut worst = 0.0_f64;
        for entry in &current.entries {
            let (err, _) = evaluate_config(
                effective,
                entry.layer,
                entry.head,
                &entry.params(),
                Draw::Batch(batch as u32),
            )?;
            ledger.record(entry.layer, entry.head, TuneStage::Drift, Fidelity::High);
            worst = worst.max(err);
        }
        let triggered = monitor.observe(worst, current.band.eps_high);
        let mut did_retune = false;
        if triggered && retuned.is_none() {
            trigger_batch = Some(batch);
            // Reduced-budget retune on the post-shift distribution,
            // warm-started per head from the cached configuration.
            let mut retune_opts = opts.clone();
            retune_opts.band = current.band;
            retune_opts.bounds = current.bounds;
            retune_opts.budget.warm_binary_iters = retune_opts.budget.retune_binary_iters;
            let workload = Workload::generate(effective)?;
            let mut results = Vec::with_capacity(current.entries.len());
            for entry in &current.entries {
                let warm = WarmStart {
                    observations: vec![(entry.s, entry.error)],
                };
                results.push(tune_head(
                    &workload,
                    entry.layer,
                    entry.head,
                    &retune_opts,
                    Some(&warm),
                    ledger,
                )?);
            }
            current = ConfigCache::from_results(
                &current.model_id,
                current.band,
                current.bounds,
                &results,
            );
            retuned = Some(results);
            monitor.reset();
            did_retune = true;
        }
        log.push(BatchRecord {
            batch,
            worst_error: worst,
            triggered,
            retuned: did_retune,
        });
    }

    Ok(DriftOutcome {
        log,
        trigger_batch,
        retuned,
        final_cache: current,
    })
}
