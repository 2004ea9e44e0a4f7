//! The persistent configuration cache: accepted per-(layer, head)
//! thresholds with provenance, written once at calibration time and
//! consumed at deployment. JSON on disk, versioned, byte-stable for a
//! fixed tuning run.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::{LatentBounds, SparseParams};
use crate::optimizer::{ErrorBand, TuneResult};
use crate::workload::StructureSpec;

pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub layer: usize,
    pub head: usize,
    pub s: f64,
    pub tau: f64,
    pub theta: f64,
    pub lambda: f64,
    pub error: f64,
    pub sparsity: f64,
    pub fallback_applied: bool,
    pub evals_low: usize,
    pub evals_high: usize,
}

impl CacheEntry {
    pub fn params(&self) -> SparseParams {
        SparseParams {
            tau_keep: self.tau,
            theta: self.theta,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigCache {
    pub version: u32,
    pub model_id: String,
    pub band: ErrorBand,
    pub bounds: LatentBounds,
    pub entries: Vec<CacheEntry>,
}

impl ConfigCache {
    pub fn from_results(
        model_id: &str,
        band: ErrorBand,
        bounds: LatentBounds,
        results: &[TuneResult],
    ) -> Self {
        let entries = results
            .iter()
            .map(|r| CacheEntry {
                layer: r.layer,
                head: r.head,
                s: r.s_best,
                tau: r.params.tau_keep,
                theta: r.params.theta,
                lambda: r.params.lambda,
                error: r.error,
                sparsity: r.sparsity,
                fallback_applied: r.fallback_applied,
                evals_low: r.evals_low,
                evals_high: r.evals_high,
            })
            .collect();
        ConfigCache {
            version: CACHE_VERSION,
            model_id: model_id.to_string(),
            band,
            bounds,
            entries,
        }
    }

    /// Reject unknown versions, invalid bounds or bands, and entries
    /// whose parameters escape the bounds box (e.g. a corrupted cache
    /// with a positive skip threshold).
    pub fn validate(&self) -> Result<()> {
        if self.version != CACHE_VERSION {
            return Err(Error::IncompatibleCache(format!(
                "unknown cache version {} (expected {CACHE_VERSION})",
                self.version
            )));
        }
        self.band.validate()?;
        self.bounds.validate()?;
        for e in &self.entries {
            if !(0.0..=1.0).contains(&e.s) {
                return Err(Error::IncompatibleCache(format!(
                    "entry ({}, {}): s = {} outside [0, 1]",
                    e.layer, e.head, e.s
                )));
            }
            if !self.bounds.contains(&e.params()) {
                return Err(Error::IncompatibleCache(format!(
                    "entry ({}, {}): parameters outside bounds",
                    e.layer, e.head
                )));
            }
        }
        Ok(())
    }

    /// A cache matches a workload when it covers exactly the workload's
    /// (layer, head) set.
    pub fn check_compatible(&self, spec: &StructureSpec) -> Result<()> {
        let expected = spec.layers * spec.heads;
        if self.entries.len() != expected {
            return Err(Error::IncompatibleCache(format!(
                "cache has {} entries, workload has {} heads",
                self.entries.len(),
                expected
            )));
        }
        let mut seen = vec![false; expected];
        for e in &self.entries {
            if e.layer >= spec.layers || e.head >= spec.heads {
                return Err(Error::IncompatibleCache(format!(
                    "entry ({}, {}) outside {}x{} model",
                    e.layer, e.head, spec.layers, spec.heads
                )));
            }
            let idx = e.layer * spec.heads + e.head;
            if seen[idx] {
                return Err(Error::IncompatibleCache(format!(
                    "duplicate entry for ({}, {})",
                    e.layer, e.head
                )));
            }
            seen[idx] = true;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cache serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cache: ConfigCache =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cache.validate()?;
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn entry(&self, layer: usize, head: usize) -> Option<&CacheEntry> {
        self.entries
            .iter()
            .find(|e| e.layer == layer && e.head == head)
    }
}
