//! blocktune: self-tuning block-sparse attention.
//!
//! Discovers layer- and head-specific sparsity thresholds — a top-CDF
//! keep mass, a self-similarity gate, and a log-space skip threshold —
//! by a hybrid of multi-fidelity Bayesian optimization (global, on short
//! sequences) and binary-search refinement (local, on long sequences),
//! finished with multi-input validation and an automatic fallback.
//! A desk-scale block-sparse attention simulator with a dense reference
//! oracle stands in for the production kernel.

pub mod attention;
pub mod cache;
pub mod drift;
pub mod error;
pub mod gp;
pub mod latent;
pub mod ledger;
pub mod mat;
pub mod optimizer;
pub mod sparse;
pub mod suite;
pub mod workload;

pub use cache::ConfigCache;
pub use error::{Error, Result};
pub use ledger::{CostLedger, CostModel};
pub use optimizer::{tune_head, tune_model, ErrorBand, TuneBudget, TuneOptions, TuneResult};
pub use latent::{map_s_to_params, LatentBounds, LatentPoint, SparseParams};
pub use sparse::{BlockGrid, Fidelity};
pub use workload::{StructureSpec, Workload};
