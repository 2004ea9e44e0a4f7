//! Synthetic per-layer/per-head attention workloads.
//!
//! Queries and keys are assembled from three structural ingredients —
//! a slowly drifting local direction field (band structure), designated
//! sink columns every query attends to, and a shared low-rank factor
//! (diffuse global mass) — plus Gaussian noise. Dense attention over the
//! result shows the band-plus-global-column maps the tuner is calibrated
//! against, with per-head heterogeneity: when both bandwidth and rank are
//! set, even heads lean local and odd heads lean diffuse.
//!
//! Everything is a pure function of (spec, layer, head, fidelity, draw),
//! so regeneration is bit-identical and fresh validation or batch inputs
//! are cheap to derive.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::sparse::{BlockGrid, Fidelity};

pub const SPEC_VERSION: u32 = 1;

/// The workload structure spec; serialized as the versioned key-value
/// workload file consumed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub version: u32,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub seq_len_low: usize,
    pub seq_len_high: usize,
    pub block_size: usize,
    pub causal: bool,
    /// Locality bandwidth in tokens; 0 disables the band component.
    pub bandwidth: usize,
    /// Number of sink columns (always-attended key positions).
    pub sinks: usize,
    /// Rank of the shared low-rank component; 0 disables it.
    pub rank: usize,
    /// Gaussian noise amplitude added to every Q/K entry.
    pub noise: f64,
    pub seed: u64,
}

impl Default for StructureSpec {
    fn default() -> Self {
        StructureSpec {
            version: SPEC_VERSION,
            layers: 2,
            heads: 2,
            head_dim: 32,
            seq_len_low: 256,
            seq_len_high: 1024,
            block_size: 16,
            causal: true,
            bandwidth: 32,
            sinks: 1,
            rank: 2,
            noise: 0.1,
            seed: 42,
        }
    }
}

impl StructureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported spec version {} (expected {SPEC_VERSION})",
                self.version
            )));
        }
        if self.layers == 0 || self.heads == 0 {
            return Err(Error::InvalidSpec("layers and heads must be >= 1".into()));
        }
        if self.head_dim < 4 {
            return Err(Error::InvalidSpec("head_dim must be >= 4".into()));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidSpec("block_size must be >= 1".into()));
        }
        if self.seq_len_low % self.block_size != 0 || self.seq_len_high % self.block_size != 0 {
            return Err(Error::InvalidSpec(format!(
                "sequence lengths ({}, {}) must be divisible by block_size {}",
                self.seq_len_low, self.seq_len_high, self.block_size
            )));
        }
        if self.seq_len_low == 0 || self.seq_len_low >= self.seq_len_high {
            return Err(Error::InvalidSpec(
                "need 0 < seq_len_low < seq_len_high".into(),
            ));
        }
        if self.sinks > self.seq_len_low {
            return Err(Error::InvalidSpec(
                "more sink columns than low-fidelity tokens".into(),
            ));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidSpec("noise amplitude must be >= 0".into()));
        }
        Ok(())
    }

    pub fn seq_len(&self, fidelity: Fidelity) -> usize {
        match fidelity {
            Fidelity::Low => self.seq_len_low,
            Fidelity::High => self.seq_len_high,
        }
    }

    pub fn grid(&self, fidelity: Fidelity) -> Result<BlockGrid> {
        let n = self.seq_len(fidelity);
        BlockGrid::new(n, n, self.block_size, self.causal)
    }

    pub fn model_id(&self) -> String {
        format!(
            "synthetic-l{}h{}-d{}-b{}-seed{}",
            self.layers, self.heads, self.head_dim, self.block_size, self.seed
        )
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        StructureSpec { seed, ..*self }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: StructureSpec = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Which input draw of a head to generate. Tuning uses `Tune`; stage 3
/// uses `Validation(0..5)`; the drift monitor streams `Batch(i)`; the
/// evaluate command uses `Fresh(seed)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Draw {
    Tune,
    Validation(u32),
    Batch(u32),
    Fresh(u64),
}

impl Draw {
    fn tag(self) -> (u8, u64) {
        match self {
            Draw::Tune => (0, 0),
            Draw::Validation(k) => (1, k as u64),
            Draw::Batch(b) => (2, b as u64),
            Draw::Fresh(x) => (3, x),
        }
    }
}

/// One head's query/key/value tensors at one fidelity.
#[derive(Debug, Clone)]
pub struct HeadTensors {
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
}

// Logit-scale amplitudes of the structural components, calibrated so that
// band + sink mass dominates each attention row for banded specs while
// leaving a smoothly prunable tail.
const BAND_LOGIT: f64 = 8.5;
const SINK_LOGIT: f64 = 6.5;
const RANK_LOGIT: f64 = 1.8;

/// Draw-invariant structural identity of one head: mixing weights plus
/// the fixed directions the structure lives in. Fresh draws of the same
/// head share all of this and differ only in texture (walk, coefficients,
/// noise, values).
#[derive(Debug, Clone)]
struct HeadProfile {
    bandwidth_scale: f64,
    band_weight: f64,
    rank_weight: f64,
    band_phases: Vec<f64>,
    sink_dir: Vec<f64>,
    rank_dirs: Vec<Vec<f64>>,
}

fn head_profile(spec: &StructureSpec, layer: usize, head: usize) -> HeadProfile {
    let mut rng = stream_rng(spec.seed, layer, head, 0xff, 0xff, 0);
    let jitter = |rng: &mut ChaCha12Rng| 0.9 + 0.2 * rng.random::<f64>();
    let mixed = spec.bandwidth > 0 && spec.rank > 0;
    let local = head % 2 == 0;
    let d = spec.head_dim;
    HeadProfile {
        bandwidth_scale: (0.7 + 0.35 * rng.random::<f64>()),
        band_weight: if mixed && !local { 0.35 } else { 1.0 } * jitter(&mut rng),
        rank_weight: if mixed && local { 0.35 } else { 1.0 } * jitter(&mut rng),
        band_phases: (0..d / 2)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect(),
        sink_dir: unit_vector(&mut rng, d),
        rank_dirs: (0..spec.rank).map(|_| unit_vector(&mut rng, d)).collect(),
    }
}

fn stream_rng(seed: u64, layer: usize, head: usize, fid: u8, kind: u8, idx: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&(layer as u32).to_le_bytes());
    key[12..16].copy_from_slice(&(head as u32).to_le_bytes());
    key[16] = fid;
    key[17] = kind;
    key[18..26].copy_from_slice(&idx.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

fn randn(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit_vector(rng: &mut ChaCha12Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| randn(rng)).collect();
        let n = crate::mat::norm(&v);
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Generate one head's tensors. Pure in all arguments.
pub fn generate_head(
    spec: &StructureSpec,
    layer: usize,
    head: usize,
    fidelity: Fidelity,
    draw: Draw,
) -> Result<HeadTensors> {
    spec.validate()?;
    if layer >= spec.layers || head >= spec.heads {
        return Err(Error::InvalidSpec(format!(
            "head ({layer}, {head}) outside {}x{} model",
            spec.layers, spec.heads
        )));
    }
    let profile = head_profile(spec, layer, head);
    let n = spec.seq_len(fidelity);
    let d = spec.head_dim;
    let fid_tag = match fidelity {
        Fidelity::Low => 0,
        Fidelity::High => 1,
    };
    let (kind, idx) = draw.tag();
    let mut rng = stream_rng(spec.seed, layer, head, fid_tag, kind, idx);

    let mut q = Mat::zeros(n, d);
    let mut k = Mat::zeros(n, d);

    // Band component: a slowly rotating positional code shared by Q and
    // K, so nearby tokens score high against each other and block rows
    // stay coherent under mean pooling. The code uses Hann-weighted
    // cosine features at golden-ratio-spaced frequencies, which gives a
    // smooth distance decay with small sidelobes (no long-range
    // revisits). The code is part of the head's structural identity;
    // draw-to-draw variation comes from the noise term.
    if spec.bandwidth > 0 && profile.band_weight > 0.0 {
        let eff_bw = (spec.bandwidth as f64 * profile.bandwidth_scale).max(1.0);
        let amp = (BAND_LOGIT * profile.band_weight * (d as f64).sqrt()).sqrt();
        let n_freq = d / 2;
        const GOLDEN: f64 = 0.618_033_988_749_894_9;
        let omega_max = 2.6 / eff_bw;
        let mut freqs = Vec::with_capacity(n_freq);
        let mut weight_total = 0.0;
        for m in 0..n_freq {
            let x = ((m as f64 + 1.0) * GOLDEN).fract();
            let w = 0.5 * (1.0 + (std::f64::consts::PI * x).cos());
            freqs.push((omega_max * x, w, profile.band_phases[m]));
            weight_total += w;
        }
        let pos_norm = weight_total.sqrt();
        for t in 0..n {
            for (m, &(omega, w, phase)) in freqs.iter().enumerate() {
                let arg = omega * t as f64 + phase;
                let c = (w.sqrt() / pos_norm) * amp;
                let (sin, cos) = arg.sin_cos();
                q.row_mut(t)[2 * m] += c * sin;
                q.row_mut(t)[2 * m + 1] += c * cos;
                k.row_mut(t)[2 * m] += c * sin;
                k.row_mut(t)[2 * m + 1] += c * cos;
            }
        }
    }

    // Sink columns: the leading `sinks` key rows and every query row
    // share one direction, so those columns are boosted for all queries
    // and the sink block stays coherent under mean pooling.
    if spec.sinks > 0 {
        let amp = (SINK_LOGIT * (d as f64).sqrt()).sqrt();
        let w = &profile.sink_dir;
        for si in 0..spec.sinks {
            for (j, wj) in w.iter().enumerate() {
                k.row_mut(si)[j] += amp * wj;
            }
        }
        for t in 0..n {
            for (j, wj) in w.iter().enumerate() {
                q.row_mut(t)[j] += amp * wj;
            }
        }
    }

    // Low-rank component: shared factor directions with i.i.d. token
    // coefficients; diffuse global mass.
    if spec.rank > 0 && profile.rank_weight > 0.0 {
        let amp = (RANK_LOGIT * profile.rank_weight * (d as f64).sqrt()).sqrt();
        for f in &profile.rank_dirs {
            for t in 0..n {
                let cq = randn(&mut rng) * amp;
                let ck = randn(&mut rng) * amp;
                for (j, fj) in f.iter().enumerate() {
                    q.row_mut(t)[j] += cq * fj;
                    k.row_mut(t)[j] += ck * fj;
                }
            }
        }
    }

    // Entry noise.
    if spec.noise > 0.0 {
        for t in 0..n {
            for j in 0..d {
                q.row_mut(t)[j] += spec.noise * randn(&mut rng);
                k.row_mut(t)[j] += spec.noise * randn(&mut rng);
            }
        }
    }

    let v = Mat::from_fn(n, d, |_, _| randn(&mut rng));
    Ok(HeadTensors { q, k, v })
}

/// A generated model: tuning tensors for every (layer, head) at both
/// fidelities, drawn from one structure spec.
#[derive(Debug, Clone)]
pub struct Workload {
    pub spec: StructureSpec,
    heads: Vec<HeadPair>,
}

#[derive(Debug, Clone)]
pub struct HeadPair {
    pub low: HeadTensors,
    pub high: HeadTensors,
}

impl Workload {
    pub fn generate(spec: &StructureSpec) -> Result<Self> {
        spec.validate()?;
        let mut heads = Vec::with_capacity(spec.layers * spec.heads);
        for layer in 0..spec.layers {
            for head in 0..spec.heads {
                heads.push(HeadPair {
                    low: generate_head(spec, layer, head, Fidelity::Low, Draw::Tune)?,
                    high: generate_head(spec, layer, head, Fidelity::High, Draw::Tune)?,
                });
            }
        }
        Ok(Workload {
            spec: spec.clone(),
            heads,
        })
    }

    pub fn head(&self, layer: usize, head: usize) -> &HeadPair {
        &self.heads[layer * self.spec.heads + head]
    }

    pub fn tensors(&self, layer: usize, head: usize, fidelity: Fidelity) -> &HeadTensors {
        match fidelity {
            Fidelity::Low => &self.head(layer, head).low,
            Fidelity::High => &self.head(layer, head).high,
        }
    }

    pub fn n_heads_total(&self) -> usize {
        self.spec.layers * self.spec.heads
    }
}
