//! Block-sparse attention simulator.
//!
//! Sparsity comes from two stages. First a coarse mask built from
//! mean-pooled block scores prunes low-mass key blocks (the top-CDF rule,
//! gated by block self-similarity so incoherent blocks always stay
//! dense). Second, among kept tiles, a log-space skip threshold drops
//! tiles whose max logit falls far below the query block's max. Output is
//! assembled by renormalizing softmax over the surviving entries only, so
//! quality can be compared against the dense oracle.

use crate::attention::self_similarity;
use crate::error::{Error, Result};
use crate::latent::SparseParams;
use crate::mat::{dot, Mat};

/// Partition of a (query × key) score matrix into B×B tiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGrid {
    pub block_size: usize,
    pub n_query_blocks: usize,
    pub n_key_blocks: usize,
    pub causal: bool,
}

impl BlockGrid {
    pub fn new(seq_q: usize, seq_k: usize, block_size: usize, causal: bool) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidSpec("block size must be >= 1".into()));
        }
        if seq_q == 0 || seq_q % block_size != 0 || seq_k == 0 || seq_k % block_size != 0 {
            return Err(Error::InvalidSpec(format!(
                "sequence lengths ({seq_q}, {seq_k}) must be positive multiples of block size {block_size}"
            )));
        }
        if causal && seq_q != seq_k {
            return Err(Error::InvalidSpec(
                "causal grid requires equal query/key length".into(),
            ));
        }
        Ok(BlockGrid {
            block_size,
            n_query_blocks: seq_q / block_size,
            n_key_blocks: seq_k / block_size,
            causal,
        })
    }

    /// Causal grids admit the block lower triangle only.
    #[inline]
    pub fn admissible(&self, qb: usize, kb: usize) -> bool {
        !self.causal || kb <= qb
    }

    pub fn n_admissible(&self) -> usize {
        if self.causal {
            self.n_query_blocks * (self.n_query_blocks + 1) / 2
        } else {
            self.n_query_blocks * self.n_key_blocks
        }
    }

    fn check_shapes(&self, q: &Mat, k: &Mat) -> Result<()> {
        if q.rows() != self.n_query_blocks * self.block_size
            || k.rows() != self.n_key_blocks * self.block_size
            || q.cols() != k.cols()
            || q.cols() == 0
        {
            return Err(Error::ShapeMismatch(format!(
                "grid {}x{} blocks of {} vs q {}x{}, k {}x{}",
                self.n_query_blocks,
                self.n_key_blocks,
                self.block_size,
                q.rows(),
                q.cols(),
                k.rows(),
                k.cols()
            )));
        }
        Ok(())
    }
}

/// Which tiles the coarse (mean-pooled) stage keeps.
#[derive(Debug, Clone)]
pub struct CoarseMask {
    pub n_query_blocks: usize,
    pub n_key_blocks: usize,
    keep: Vec<bool>,
}

impl CoarseMask {
    #[inline]
    pub fn kept(&self, qb: usize, kb: usize) -> bool {
        self.keep[qb * self.n_key_blocks + kb]
    }

    pub fn kept_pairs(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }
}

/// Per-tile outcome of a full sparse evaluation, mostly for inspection
/// and visualization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairState {
    /// Outside the causal lower triangle.
    Inadmissible,
    /// Dropped by the coarse top-CDF mask.
    Pruned,
    /// Kept by the mask but skipped by the lambda rule.
    Skipped,
    /// Contributes to the output.
    Survived,
}

/// Evaluation result of one sparse configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub error: f64,
    pub sparsity: f64,
    pub fidelity: Fidelity,
    pub charged_ms: f64,
}

use serde::{Deserialize, Serialize};

/// The sequence length a configuration was evaluated at. Low fidelity is
/// the cheap, rank-correlated surrogate for high fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    Low,
    High,
}

/// Mean-pool each block to one row, softmax the pooled scores per query
/// block, and keep the minimal top-mass prefix reaching `tau_keep`.
///
/// A pair is only *eligible* for pruning when both its query block and
/// key block are self-similar enough (`>= theta`); incoherent blocks are
/// kept unconditionally, the fail-safe path. Keep-sets are nested in
/// `tau_keep`: lowering it never adds a kept pair.
pub fn build_coarse_mask(
    q: &Mat,
    k: &Mat,
    params: &SparseParams,
    grid: &BlockGrid,
) -> Result<CoarseMask> {
    grid.check_shapes(q, k)?;
    let b = grid.block_size;
    let nq = grid.n_query_blocks;
    let nk = grid.n_key_blocks;
    let d = q.cols();
    let scale = 1.0 / (d as f64).sqrt();

    let q_pool: Vec<Vec<f64>> = (0..nq).map(|i| q.mean_row(i * b, b)).collect();
    let k_pool: Vec<Vec<f64>> = (0..nk).map(|j| k.mean_row(j * b, b)).collect();
    let q_sim: Vec<f64> = (0..nq).map(|i| self_similarity(q, i * b, b)).collect();
    let k_sim: Vec<f64> = (0..nk).map(|j| self_similarity(k, j * b, b)).collect();

    let mut keep = vec![false; nq * nk];
    let mut probs: Vec<(usize, f64)> = Vec::with_capacity(nk);
    for i in 0..nq {
        // Row softmax of pooled scores over admissible key blocks.
        probs.clear();
        let mut row_max = f64::NEG_INFINITY;
        for (j, kp) in k_pool.iter().enumerate() {
            if grid.admissible(i, j) {
                let s = dot(&q_pool[i], kp) * scale;
                probs.push((j, s));
                row_max = row_max.max(s);
            }
        }
        let mut denom = 0.0;
        for (_, p) in probs.iter_mut() {
            *p = (*p - row_max).exp();
            denom += *p;
        }
        for (_, p) in probs.iter_mut() {
            *p /= denom;
        }

        // Ineligible pairs are always kept.
        let mut eligible: Vec<(usize, f64)> = Vec::with_capacity(probs.len());
        for &(j, p) in &probs {
            if q_sim[i] >= params.theta && k_sim[j] >= params.theta {
                eligible.push((j, p));
            } else {
                keep[i * nk + j] = true;
            }
        }

        // Minimal descending prefix of eligible pairs whose cumulative
        // pooled mass reaches tau_keep; everything past the cut is pruned.
        // Ties broken by key-block index so keep-sets nest exactly.
        eligible.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut cum = 0.0;
        let mut cut = eligible.len();
        for (rank, &(_, p)) in eligible.iter().enumerate() {
            cum += p;
            if cum >= params.tau_keep {
                cut = rank + 1;
                break;
            }
        }
        for &(j, _) in &eligible[..cut] {
            keep[i * nk + j] = true;
        }
    }

    Ok(CoarseMask {
        n_query_blocks: nq,
        n_key_blocks: nk,
        keep,
    })
}

/// Full sparse evaluation: output matrix, block sparsity, and per-tile
/// states.
pub struct SparseTrace {
    pub output: Mat,
    pub sparsity: f64,
    pub states: Vec<PairState>,
}

/// Sparse attention under `params`: coarse-masked, lambda-skipped,
/// softmax renormalized over survivors.
pub fn sparse_attention(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    params: &SparseParams,
    grid: &BlockGrid,
) -> Result<(Mat, f64)> {
    let trace = sparse_attention_trace(q, k, v, params, grid)?;
    Ok((trace.output, trace.sparsity))
}

/// Sparsity (and tile states) without assembling the output; used where
/// only the mask structure matters.
pub fn sparsity_only(q: &Mat, k: &Mat, params: &SparseParams, grid: &BlockGrid) -> Result<f64> {
    let (states, _, _) = analyze(q, k, params, grid)?;
    Ok(sparsity_of(&states, grid))
}

fn sparsity_of(states: &[PairState], grid: &BlockGrid) -> f64 {
    let survived = states
        .iter()
        .filter(|s| **s == PairState::Survived)
        .count();
    1.0 - survived as f64 / grid.n_admissible() as f64
}

/// Shared first pass: tile states and the logits of kept tiles.
/// Logits for non-kept positions are left at -inf.
fn analyze(
    q: &Mat,
    k: &Mat,
    params: &SparseParams,
    grid: &BlockGrid,
) -> Result<(Vec<PairState>, Mat, CoarseMask)> {
    if params.lambda > 0.0 {
        return Err(Error::InvalidBounds(format!(
            "lambda must be <= 0, got {}",
            params.lambda
        )));
    }
    let mask = build_coarse_mask(q, k, params, grid)?;
    let b = grid.block_size;
    let nq = grid.n_query_blocks;
    let nk = grid.n_key_blocks;
    let d = q.cols();
    let scale = 1.0 / (d as f64).sqrt();

    let mut scores = Mat::from_fn(q.rows(), k.rows(), |_, _| f64::NEG_INFINITY);
    let mut states = vec![PairState::Inadmissible; nq * nk];
    let mut block_max = vec![f64::NEG_INFINITY; nq * nk];

    // Dense scores only for kept tiles, tracking each tile's max logit.
    for qb in 0..nq {
        for kb in 0..nk {
            if !grid.admissible(qb, kb) {
                continue;
            }
            if !mask.kept(qb, kb) {
                states[qb * nk + kb] = PairState::Pruned;
                continue;
            }
            let mut m = f64::NEG_INFINITY;
            for a in qb * b..(qb + 1) * b {
                let qa = q.row(a);
                let col_end = if grid.causal {
                    (a + 1).min((kb + 1) * b)
                } else {
                    (kb + 1) * b
                };
                for c in kb * b..col_end {
                    let s = dot(qa, k.row(c)) * scale;
                    scores.set(a, c, s);
                    m = m.max(s);
                }
            }
            block_max[qb * nk + kb] = m;
            states[qb * nk + kb] = PairState::Survived;
        }
    }

    // Lambda skip against the query block's global max over kept tiles.
    for qb in 0..nq {
        let mut qmax = f64::NEG_INFINITY;
        for kb in 0..nk {
            if states[qb * nk + kb] == PairState::Survived {
                qmax = qmax.max(block_max[qb * nk + kb]);
            }
        }
        for kb in 0..nk {
            let idx = qb * nk + kb;
            if states[idx] == PairState::Survived && block_max[idx] - qmax < params.lambda {
                states[idx] = PairState::Skipped;
            }
        }
        // The tile achieving the max has gap 0 >= lambda, so a row can
        // never lose all of its tiles.
        assert!(
            (0..nk).any(|kb| states[qb * nk + kb] == PairState::Survived),
            "all tiles skipped for query block {qb}"
        );
    }

    Ok((states, scores, mask))
}

pub fn sparse_attention_trace(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    params: &SparseParams,
    grid: &BlockGrid,
) -> Result<SparseTrace> {
    if v.rows() != k.rows() {
        return Err(Error::ShapeMismatch(format!(
            "v rows {} vs k rows {}",
            v.rows(),
            k.rows()
        )));
    }
    let (states, scores, _) = analyze(q, k, params, grid)?;
    let b = grid.block_size;
    let nk = grid.n_key_blocks;

    let mut out = Mat::zeros(q.rows(), v.cols());
    for a in 0..q.rows() {
        let qb = a / b;
        // Row max over surviving entries, then renormalized softmax.
        let mut row_max = f64::NEG_INFINITY;
        for kb in 0..nk {
            if states[qb * nk + kb] != PairState::Survived {
                continue;
            }
            for c in kb * b..(kb + 1) * b {
                let s = scores.get(a, c);
                if s > f64::NEG_INFINITY {
                    row_max = row_max.max(s);
                }
            }
        }
        assert!(row_max > f64::NEG_INFINITY, "empty row {a}");
        let mut denom = 0.0;
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for kb in 0..nk {
            if states[qb * nk + kb] != PairState::Survived {
                continue;
            }
            for c in kb * b..(kb + 1) * b {
                let s = scores.get(a, c);
                if s > f64::NEG_INFINITY {
                    let w = (s - row_max).exp();
                    denom += w;
                    weights.push((c, w));
                }
            }
        }
        let inv = 1.0 / denom;
        let out_row = out.row_mut(a);
        for (c, w) in weights {
            let w = w * inv;
            for (o, x) in out_row.iter_mut().zip(v.row(c)) {
                *o += w * x;
            }
        }
    }

    let sparsity = sparsity_of(&states, grid);
    Ok(SparseTrace {
        output: out,
        sparsity,
        states,
    })
}
