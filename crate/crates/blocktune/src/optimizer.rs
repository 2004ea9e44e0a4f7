//! The three-stage tuning pipeline, plus grid-search, random-search and
//! exploration-only baselines.
//!
//! Stage 1 explores the latent line with a GP on cheap low-fidelity
//! error evaluations and extracts probably-feasible regions. Stage 2
//! bisects the best two regions with high-fidelity evaluations, keeping
//! the highest-sparsity midpoint whose error lands inside the target
//! band. Stage 3 validates the candidate on five fresh inputs and, on a
//! worst-case violation, applies a one-shot 10% latent reduction.
//!
//! Heads after the first are warm-started: the previous accepted head's
//! Stage-1 observations seed the next GP as pseudo-observations at 10x
//! noise, and the exploration and bisection budgets shrink (15 -> 8
//! low-fidelity evaluations, 4 -> 3 bisections per region).

use serde::{Deserialize, Serialize};
use std::cell::{Cell, RefCell};

use crate::attention::{dense_attention, relative_l1};
use crate::error::{Error, Result};
use crate::gp::{extract_low_ucb_regions, propose_next, GpModel, Observation, Region};
use crate::latent::{map_s_to_params, LatentBounds, SparseParams};
use crate::ledger::{CostLedger, CostModel, TuneStage};
use crate::mat::Mat;
use crate::sparse::{sparse_attention, EvalOutcome, Fidelity};
use crate::workload::{generate_head, Draw, HeadTensors, Workload};

/// Target interval for relative-L1 error. Below `eps_low` sparsity is
/// being left on the table; above `eps_high` the configuration is
/// infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBand {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Default for ErrorBand {
    fn default() -> Self {
        ErrorBand {
            eps_low: 0.045,
            eps_high: 0.055,
        }
    }
}

impl ErrorBand {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_low && self.eps_low < self.eps_high) {
            return Err(Error::InvalidBounds(format!(
                "error band needs 0 <= eps_low < eps_high, got [{}, {}]",
                self.eps_low, self.eps_high
            )));
        }
        Ok(())
    }
}

/// GP knobs for Stage 1. The length scale is fixed (no marginal
/// likelihood tuning); noise is purely for conditioning since simulator
/// evaluations are deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    pub length_scale: f64,
    pub noise_var: f64,
    pub ucb_beta: f64,
    /// Noise multiplier for warm-start pseudo-observations.
    pub warm_noise_factor: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_scale: crate::gp::DEFAULT_LENGTH_SCALE,
            noise_var: crate::gp::DEFAULT_NOISE_VAR,
            ucb_beta: crate::gp::DEFAULT_UCB_BETA,
            warm_noise_factor: 10.0,
        }
    }
}

/// Evaluation budgets per stage, cold and warm.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneBudget {
    pub init_points: Vec<f64>,
    pub bo_iters: usize,
    pub warm_bo_iters: usize,
    pub regions_refined: usize,
    pub binary_iters: usize,
    pub warm_binary_iters: usize,
    /// Reduced bisection budget for drift-triggered re-calibration.
    pub retune_binary_iters: usize,
    pub validation_inputs: usize,
}

impl Default for TuneBudget {
    fn default() -> Self {
        TuneBudget {
            init_points: vec![0.2, 0.5, 0.8],
            bo_iters: 12,
            warm_bo_iters: 8,
            regions_refined: 2,
            binary_iters: 4,
            warm_binary_iters: 3,
            retune_binary_iters: 2,
            validation_inputs: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub band: ErrorBand,
    pub bounds: LatentBounds,
    pub budget: TuneBudget,
    pub gp: GpConfig,
    /// Tune head 0 of each layer and broadcast to its siblings.
    pub per_layer: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            band: ErrorBand::default(),
            bounds: LatentBounds::default(),
            budget: TuneBudget::default(),
            gp: GpConfig::default(),
            per_layer: false,
        }
    }
}

impl TuneOptions {
    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        self.bounds.validate()?;
        if self.budget.init_points.is_empty()
            || self.budget.regions_refined == 0
            || self.budget.binary_iters == 0
        {
            return Err(Error::ContractViolation("degenerate tune budget".into()));
        }
        Ok(())
    }
}

/// How a result was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMethod {
    Afbs,
    BoOnly,
    Grid,
    Random,
}

/// Accepted configuration for one (layer, head), with provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub layer: usize,
    pub head: usize,
    pub method: TuneMethod,
    pub warm_started: bool,
    pub s_best: f64,
    pub params: SparseParams,
    pub error: f64,
    pub sparsity: f64,
    pub fallback_applied: bool,
    /// No bisection midpoint landed inside the band; the head ships the
    /// dense configuration (s = 0) instead of an unvalidated guess.
    pub band_miss: bool,
    pub evals_low: usize,
    pub evals_high: usize,
    pub validation_errors: Vec<f64>,
    /// Error of the post-fallback re-check on the worst input.
    pub fallback_error: Option<f64>,
    /// Best observed low-fidelity error after each Stage-1 evaluation.
    pub regret_trace: Vec<f64>,
    /// Stage-1 (s, error) pairs, the warm-start seed for the next head.
    pub stage1_observations: Vec<(f64, f64)>,
}

/// Stage-1 observations carried across heads.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub observations: Vec<(f64, f64)>,
}

#[derive(Debug)]
pub struct Stage1Outcome {
    pub model: GpModel,
    pub regions: Vec<Region>,
    pub observations: Vec<(f64, f64)>,
    pub regret: Vec<f64>,
}

/// Stage 1: GP exploration of the low-fidelity error landscape.
///
/// Cold runs evaluate the fixed init points then `bo_iters` EI-chosen
/// points. Warm runs skip the init points, seed the GP with the previous
/// head's observations at inflated noise, and run `warm_bo_iters`
/// EI-chosen evaluations.
pub fn stage1_explore<E>(
    mut eval_low: E,
    band: &ErrorBand,
    budget: &TuneBudget,
    gp: &GpConfig,
    warm: Option<&WarmStart>,
) -> Result<Stage1Outcome>
where
    E: FnMut(f64) -> Result<f64>,
{
    let mut obs: Vec<Observation> = Vec::new();
    let mut real: Vec<(f64, f64)> = Vec::new();
    let mut regret: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;

    let iters = match warm {
        Some(w) => {
            if w.observations.is_empty() {
                return Err(Error::ContractViolation(
                    "warm start requires prior observations".into(),
                ));
            }
            for &(s, y) in &w.observations {
                obs.push(Observation::with_noise_scale(s, y, gp.warm_noise_factor));
            }
            budget.warm_bo_iters
        }
        None => {
            for &s in &budget.init_points {
                let y = eval_low(s)?;
                obs.push(Observation::new(s, y));
                real.push((s, y));
                best = best.min(y);
                regret.push(best);
            }
            budget.bo_iters
        }
    };

    let mut model = GpModel::fit(obs.clone(), gp.length_scale, gp.noise_var)?;
    for _ in 0..iters {
        let s_next = propose_next(&model, model.best_observed()).value();
        let y = eval_low(s_next)?;
        obs.push(Observation::new(s_next, y));
        real.push((s_next, y));
        best = best.min(y);
        regret.push(best);
        // Full refit; no incremental update shortcuts.
        model = GpModel::fit(obs.clone(), gp.length_scale, gp.noise_var)?;
    }

    let regions = extract_low_ucb_regions(&model, band.eps_high, gp.ucb_beta);
    Ok(Stage1Outcome {
        model,
        regions,
        observations: real,
        regret,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionStep {
    pub region_index: usize,
    pub s_mid: f64,
    pub error: f64,
    pub sparsity: f64,
    pub recorded: bool,
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub s_best: f64,
    pub error: f64,
    pub sparsity: f64,
    pub band_miss: bool,
    pub steps: Vec<BisectionStep>,
}

/// Stage 2: high-fidelity binary refinement of the first
/// `regions_refined` regions.
///
/// Each bisection moves toward the feasibility boundary: a feasible
/// midpoint raises the lower bracket, an infeasible one lowers the
/// upper. A midpoint is *recorded* only when its error lands inside the
/// band and it improves the region's best sparsity. With nothing
/// recorded anywhere, the region-1 lower endpoint is evaluated and
/// returned flagged as a band miss.
pub fn stage2_refine<E>(
    mut eval_high: E,
    regions: &[Region],
    band: &ErrorBand,
    iters: usize,
    regions_refined: usize,
) -> Result<Stage2Outcome>
where
    E: FnMut(f64) -> Result<(f64, f64)>,
{
    if regions.is_empty() {
        return Err(Error::ContractViolation(
            "stage 2 requires at least one region".into(),
        ));
    }
    if iters == 0 {
        return Err(Error::ContractViolation(
            "stage 2 requires at least one bisection".into(),
        ));
    }
    let (best, steps, _) = stage2_core(&mut eval_high, regions, band, iters, regions_refined)?;
    finish_stage2(eval_high, regions, best, steps)
}

type Stage2Best = Option<(f64, f64, f64)>;

/// Bisection pass over the given regions. Returns the best recorded
/// (s, error, sparsity), the step log, and each region's final bracket.
fn stage2_core<E>(
    eval_high: &mut E,
    regions: &[Region],
    band: &ErrorBand,
    iters: usize,
    regions_refined: usize,
) -> Result<(Stage2Best, Vec<BisectionStep>, Vec<Region>)>
where
    E: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut steps = Vec::new();
    let mut best: Stage2Best = None;
    let mut brackets = Vec::new();

    for (ri, region) in regions.iter().take(regions_refined).enumerate() {
        let mut s_l = region.s_low;
        let mut s_h = region.s_high;
        let mut local: Stage2Best = None;
        for _ in 0..iters {
            let s_mid = 0.5 * (s_l + s_h);
            let (e, sp) = eval_high(s_mid)?;
            let mut recorded = false;
            if e <= band.eps_high {
                if e >= band.eps_low && local.is_none_or(|(_, _, lsp)| sp > lsp) && sp > 0.0 {
                    local = Some((s_mid, e, sp));
                    recorded = true;
                }
                s_l = s_mid;
            } else {
                s_h = s_mid;
            }
            steps.push(BisectionStep {
                region_index: ri,
                s_mid,
                error: e,
                sparsity: sp,
                recorded,
            });
        }
        brackets.push(Region {
            s_low: s_l,
            s_high: s_h,
        });
        if let Some((ls, le, lsp)) = local {
            if best.is_none_or(|(_, _, bsp)| lsp > bsp) {
                best = Some((ls, le, lsp));
            }
        }
    }
    Ok((best, steps, brackets))
}

fn finish_stage2<E>(
    mut eval_high: E,
    regions: &[Region],
    best: Stage2Best,
    steps: Vec<BisectionStep>,
) -> Result<Stage2Outcome>
where
    E: FnMut(f64) -> Result<(f64, f64)>,
{
    match best {
        Some((s_best, error, sparsity)) => Ok(Stage2Outcome {
            s_best,
            error,
            sparsity,
            band_miss: false,
            steps,
        }),
        None => {
            let s = regions[0].s_low;
            let (e, sp) = eval_high(s)?;
            Ok(Stage2Outcome {
                s_best: s,
                error: e,
                sparsity: sp,
                band_miss: true,
                steps,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage3Outcome {
    pub s_final: f64,
    pub error: f64,
    pub sparsity: f64,
    pub fallback_applied: bool,
    pub validation_errors: Vec<f64>,
    pub fallback_error: Option<f64>,
}

/// Stage 3: validate the candidate on the first five validation inputs.
/// On a worst-case violation, reduce `s` by 10% once, re-check the
/// single worst-offending input, and accept the reduced configuration.
pub fn stage3_validate<E>(
    mut eval_input: E,
    s_best: f64,
    stage2_error: f64,
    stage2_sparsity: f64,
    band: &ErrorBand,
    n_inputs: usize,
) -> Result<Stage3Outcome>
where
    E: FnMut(usize, f64) -> Result<(f64, f64)>,
{
    if n_inputs < 5 {
        return Err(Error::ContractViolation(format!(
            "stage 3 requires 5 validation inputs, got {n_inputs}"
        )));
    }
    let mut validation_errors = Vec::with_capacity(5);
    for idx in 0..5 {
        let (e, _) = eval_input(idx, s_best)?;
        validation_errors.push(e);
    }
    let (worst_idx, worst) = validation_errors
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &e)| {
            if e > acc.1 {
                (i, e)
            } else {
                acc
            }
        });
    if worst <= band.eps_high {
        return Ok(Stage3Outcome {
            s_final: s_best,
            error: stage2_error,
            sparsity: stage2_sparsity,
            fallback_applied: false,
            validation_errors,
            fallback_error: None,
        });
    }
    // One-shot fallback: 10% latent reduction, re-checked on the worst
    // input only. The result keeps the candidate's tuning-input error
    // (the reduced latent can only lower it); the re-check outcome is
    // recorded separately.
    let s_fb = 0.9 * s_best;
    let (e_fb, sp_fb) = eval_input(worst_idx, s_fb)?;
    Ok(Stage3Outcome {
        s_final: s_fb,
        error: stage2_error,
        sparsity: sp_fb,
        fallback_applied: true,
        validation_errors,
        fallback_error: Some(e_fb),
    })
}

/// Simulator-backed evaluator for one (layer, head): binds the tuning
/// tensors at both fidelities, caches dense references, draws validation
/// inputs on demand, and records every evaluation in the ledger.
pub struct HeadEvaluator<'w> {
    workload: &'w Workload,
    pub layer: usize,
    pub head: usize,
    bounds: LatentBounds,
    dense_low: Mat,
    dense_high: Mat,
    validation: RefCell<Vec<(HeadTensors, Mat)>>,
    counts: Cell<(usize, usize)>,
    cost: CostModel,
    ledger: &'w CostLedger,
}

impl<'w> HeadEvaluator<'w> {
    pub fn new(
        workload: &'w Workload,
        layer: usize,
        head: usize,
        bounds: LatentBounds,
        ledger: &'w CostLedger,
    ) -> Result<Self> {
        let causal = workload.spec.causal;
        let low = workload.tensors(layer, head, Fidelity::Low);
        let high = workload.tensors(layer, head, Fidelity::High);
        Ok(HeadEvaluator {
            workload,
            layer,
            head,
            bounds,
            dense_low: dense_attention(&low.q, &low.k, &low.v, causal)?,
            dense_high: dense_attention(&high.q, &high.k, &high.v, causal)?,
            validation: RefCell::new(Vec::new()),
            counts: Cell::new((0, 0)),
            cost: CostModel::default(),
            ledger,
        })
    }

    fn charge(&self, stage: TuneStage, fidelity: Fidelity) {
        let (low, high) = self.counts.get();
        match fidelity {
            Fidelity::Low => self.counts.set((low + 1, high)),
            Fidelity::High => self.counts.set((low, high + 1)),
        }
        self.ledger.record(self.layer, self.head, stage, fidelity);
    }

    /// Full evaluation of one latent point on the tuning input.
    pub fn eval_outcome(
        &self,
        s: f64,
        fidelity: Fidelity,
        stage: TuneStage,
    ) -> Result<EvalOutcome> {
        let params = map_s_to_params(s, &self.bounds)?;
        let tensors = self.workload.tensors(self.layer, self.head, fidelity);
        let grid = self.workload.spec.grid(fidelity)?;
        let (out, sparsity) = sparse_attention(&tensors.q, &tensors.k, &tensors.v, &params, &grid)?;
        let dense = match fidelity {
            Fidelity::Low => &self.dense_low,
            Fidelity::High => &self.dense_high,
        };
        let error = relative_l1(&out, dense)?;
        self.charge(stage, fidelity);
        Ok(EvalOutcome {
            error,
            sparsity,
            fidelity,
            charged_ms: match fidelity {
                Fidelity::Low => self.cost.c_low_ms,
                Fidelity::High => self.cost.c_high_ms,
            },
        })
    }

    /// Low-fidelity evaluation: error only, per the Stage-1 contract.
    pub fn eval_low(&self, s: f64) -> Result<f64> {
        Ok(self.eval_outcome(s, Fidelity::Low, TuneStage::Explore)?.error)
    }

    pub fn eval_high(&self, s: f64, stage: TuneStage) -> Result<(f64, f64)> {
        let o = self.eval_outcome(s, Fidelity::High, stage)?;
        Ok((o.error, o.sparsity))
    }

    /// High-fidelity evaluation on a fresh validation draw.
    pub fn eval_validation(&self, idx: usize, s: f64) -> Result<(f64, f64)> {
        {
            let mut cache = self.validation.borrow_mut();
            while cache.len() <= idx {
                let k = cache.len() as u32;
                let t = generate_head(
                    &self.workload.spec,
                    self.layer,
                    self.head,
                    Fidelity::High,
                    Draw::Validation(k),
                )?;
                let dense = dense_attention(&t.q, &t.k, &t.v, self.workload.spec.causal)?;
                cache.push((t, dense));
            }
        }
        let params = map_s_to_params(s, &self.bounds)?;
        let grid = self.workload.spec.grid(Fidelity::High)?;
        let cache = self.validation.borrow();
        let (t, dense) = &cache[idx];
        let (out, sparsity) = sparse_attention(&t.q, &t.k, &t.v, &params, &grid)?;
        let error = relative_l1(&out, dense)?;
        self.charge(TuneStage::Validate, Fidelity::High);
        Ok((error, sparsity))
    }

    pub fn counts(&self) -> (usize, usize) {
        self.counts.get()
    }
}

/// Stage 2 with the full per-head region budget. With fewer extracted
/// regions than the budget covers, the spare region rounds continue the
/// bisection from the previous round's final bracket, so every head
/// spends exactly `regions_refined * iters` refinement evaluations.
pub fn stage2_with_budget<E>(
    mut eval_high: E,
    regions: &[Region],
    band: &ErrorBand,
    iters: usize,
    regions_refined: usize,
) -> Result<Stage2Outcome>
where
    E: FnMut(f64) -> Result<(f64, f64)>,
{
    let available = regions.len().min(regions_refined);
    let (mut best, mut steps, brackets) =
        stage2_core(&mut eval_high, regions, band, iters, available)?;
    let mut bracket = brackets[0];
    for _ in available..regions_refined {
        let (b, more_steps, more_brackets) =
            stage2_core(&mut eval_high, &[bracket], band, iters, 1)?;
        if let Some((s, e, sp)) = b {
            if best.is_none_or(|(_, _, bsp)| sp > bsp) {
                best = Some((s, e, sp));
            }
        }
        steps.extend(more_steps);
        bracket = more_brackets[0];
    }
    finish_stage2(eval_high, regions, best, steps)
}

/// Full pipeline for one head, driven by arbitrary evaluators:
/// `eval_low(s) -> error`, `eval_high(s) -> (error, sparsity)`,
/// `eval_validation(input_idx, s) -> (error, sparsity)`.
pub fn tune_head_with<L, H, V>(
    mut eval_low: L,
    mut eval_high: H,
    eval_validation: V,
    layer: usize,
    head: usize,
    opts: &TuneOptions,
    warm: Option<&WarmStart>,
) -> Result<TuneResult>
where
    L: FnMut(f64) -> Result<f64>,
    H: FnMut(f64) -> Result<(f64, f64)>,
    V: FnMut(usize, f64) -> Result<(f64, f64)>,
{
    opts.validate()?;
    let mut evals_low = 0;
    let mut evals_high = 0;

    let stage1 = stage1_explore(
        |s| {
            evals_low += 1;
            eval_low(s)
        },
        &opts.band,
        &opts.budget,
        &opts.gp,
        warm,
    )?;

    let iters = if warm.is_some() {
        opts.budget.warm_binary_iters
    } else {
        opts.budget.binary_iters
    };
    let stage2 = stage2_with_budget(
        |s| {
            evals_high += 1;
            eval_high(s)
        },
        &stage1.regions,
        &opts.band,
        iters,
        opts.budget.regions_refined,
    )?;

    if stage2.band_miss {
        // Never ship an unvalidated aggressive configuration: fall back
        // to dense (s = 0), flagged.
        return Ok(TuneResult {
            layer,
            head,
            method: TuneMethod::Afbs,
            warm_started: warm.is_some(),
            s_best: 0.0,
            params: map_s_to_params(0.0, &opts.bounds)?,
            error: 0.0,
            sparsity: 0.0,
            fallback_applied: false,
            band_miss: true,
            evals_low,
            evals_high,
            validation_errors: Vec::new(),
            fallback_error: None,
            regret_trace: stage1.regret,
            stage1_observations: stage1.observations,
        });
    }

    let mut eval_validation = eval_validation;
    let stage3 = stage3_validate(
        |idx, s| {
            evals_high += 1;
            eval_validation(idx, s)
        },
        stage2.s_best,
        stage2.error,
        stage2.sparsity,
        &opts.band,
        opts.budget.validation_inputs,
    )?;

    Ok(TuneResult {
        layer,
        head,
        method: TuneMethod::Afbs,
        warm_started: warm.is_some(),
        s_best: stage3.s_final,
        params: map_s_to_params(stage3.s_final, &opts.bounds)?,
        error: stage3.error,
        sparsity: stage3.sparsity,
        fallback_applied: stage3.fallback_applied,
        band_miss: false,
        evals_low,
        evals_high,
        validation_errors: stage3.validation_errors,
        fallback_error: stage3.fallback_error,
        regret_trace: stage1.regret,
        stage1_observations: stage1.observations,
    })
}

/// Full pipeline for one head of a simulated workload.
pub fn tune_head(
    workload: &Workload,
    layer: usize,
    head: usize,
    opts: &TuneOptions,
    warm: Option<&WarmStart>,
    ledger: &CostLedger,
) -> Result<TuneResult> {
    opts.validate()?;
    let eval = HeadEvaluator::new(workload, layer, head, opts.bounds, ledger)?;
    tune_head_with(
        |s| eval.eval_low(s),
        |s| eval.eval_high(s, TuneStage::Refine),
        |idx, s| eval.eval_validation(idx, s),
        layer,
        head,
        opts,
        warm,
    )
}

/// Tune every (layer, head): the first head cold, each subsequent head
/// warm-started from the previous accepted head's Stage-1 observations.
/// In per-layer mode only head 0 of each layer is tuned and the result
/// broadcast to its siblings (with zero evaluation counts).
pub fn tune_model(
    workload: &Workload,
    opts: &TuneOptions,
    ledger: &CostLedger,
) -> Result<Vec<TuneResult>> {
    opts.validate()?;
    let mut results = Vec::new();
    let mut warm: Option<WarmStart> = None;
    for layer in 0..workload.spec.layers {
        let heads = if opts.per_layer {
            1
        } else {
            workload.spec.heads
        };
        for head in 0..heads {
            let r = tune_head(workload, layer, head, opts, warm.as_ref(), ledger)?;
            if !r.band_miss {
                warm = Some(WarmStart {
                    observations: r.stage1_observations.clone(),
                });
            }
            if opts.per_layer {
                for sibling in 1..workload.spec.heads {
                    let mut b = r.clone();
                    b.head = sibling;
                    b.evals_low = 0;
                    b.evals_high = 0;
                    results.push(b);
                }
            }
            results.push(r);
        }
    }
    results.sort_by_key(|r| (r.layer, r.head));
    Ok(results)
}

/// Feasible pick of a baseline sweep.
#[derive(Debug, Clone, Copy)]
pub struct BaselinePick {
    pub s: f64,
    pub error: f64,
    pub sparsity: f64,
    /// False when no evaluated point was feasible (dense fallback).
    pub feasible: bool,
    pub evals: usize,
}

/// Uniform-grid baseline: evaluate `grid_points` latent values at high
/// fidelity and accept the feasible point with maximum sparsity.
pub fn grid_search_baseline<E>(
    mut eval_high: E,
    band: &ErrorBand,
    grid_points: usize,
) -> Result<BaselinePick>
where
    E: FnMut(f64) -> Result<(f64, f64)>,
{
    if grid_points < 2 {
        return Err(Error::ContractViolation(
            "grid search needs at least 2 points".into(),
        ));
    }
    let mut best: Option<BaselinePick> = None;
    for i in 0..grid_points {
        let s = i as f64 / (grid_points - 1) as f64;
        let (e, sp) = eval_high(s)?;
        if e <= band.eps_high && best.is_none_or(|b| sp > b.sparsity) {
            best = Some(BaselinePick {
                s,
                error: e,
                sparsity: sp,
                feasible: true,
                evals: 0,
            });
        }
    }
    let mut pick = best.unwrap_or(BaselinePick {
        s: 0.0,
        error: 0.0,
        sparsity: 0.0,
        feasible: false,
        evals: 0,
    });
    pick.evals = grid_points;
    Ok(pick)
}

/// Random-search baseline: i.i.d. uniform latent samples, same
/// acceptance rule as the grid.
pub fn random_search_baseline<E>(
    mut eval: E,
    band: &ErrorBand,
    eval_budget: usize,
    seed: u64,
) -> Result<BaselinePick>
where
    E: FnMut(f64) -> Result<(f64, f64)>,
{
    if eval_budget == 0 {
        return Err(Error::ContractViolation(
            "random search needs a positive budget".into(),
        ));
    }
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut best: Option<BaselinePick> = None;
    for _ in 0..eval_budget {
        let s = rng.random::<f64>();
        let (e, sp) = eval(s)?;
        if e <= band.eps_high && best.is_none_or(|b| sp > b.sparsity) {
            best = Some(BaselinePick {
                s,
                error: e,
                sparsity: sp,
                feasible: true,
                evals: 0,
            });
        }
    }
    let mut pick = best.unwrap_or(BaselinePick {
        s: 0.0,
        error: 0.0,
        sparsity: 0.0,
        feasible: false,
        evals: 0,
    });
    pick.evals = eval_budget;
    Ok(pick)
}

fn pick_to_result(
    pick: BaselinePick,
    layer: usize,
    head: usize,
    method: TuneMethod,
    bounds: &LatentBounds,
    counts: (usize, usize),
) -> Result<TuneResult> {
    Ok(TuneResult {
        layer,
        head,
        method,
        warm_started: false,
        s_best: pick.s,
        params: map_s_to_params(pick.s, bounds)?,
        error: pick.error,
        sparsity: pick.sparsity,
        fallback_applied: false,
        band_miss: !pick.feasible,
        evals_low: counts.0,
        evals_high: counts.1,
        validation_errors: Vec::new(),
        fallback_error: None,
        regret_trace: Vec::new(),
        stage1_observations: Vec::new(),
    })
}

/// Grid baseline bound to the simulator for one head.
pub fn grid_search_head(
    workload: &Workload,
    layer: usize,
    head: usize,
    band: &ErrorBand,
    bounds: &LatentBounds,
    grid_points: usize,
    ledger: &CostLedger,
) -> Result<TuneResult> {
    let eval = HeadEvaluator::new(workload, layer, head, *bounds, ledger)?;
    let pick = grid_search_baseline(
        |s| eval.eval_high(s, TuneStage::Baseline),
        band,
        grid_points,
    )?;
    pick_to_result(pick, layer, head, TuneMethod::Grid, bounds, eval.counts())
}

/// Random baseline bound to the simulator for one head.
pub fn random_search_head(
    workload: &Workload,
    layer: usize,
    head: usize,
    band: &ErrorBand,
    bounds: &LatentBounds,
    eval_budget: usize,
    seed: u64,
    ledger: &CostLedger,
) -> Result<TuneResult> {
    let eval = HeadEvaluator::new(workload, layer, head, *bounds, ledger)?;
    let pick = random_search_baseline(
        |s| eval.eval_high(s, TuneStage::Baseline),
        band,
        eval_budget,
        seed,
    )?;
    pick_to_result(pick, layer, head, TuneMethod::Random, bounds, eval.counts())
}

/// Exploration-only ablation: Stage 1, then pick the feasible argmax —
/// the largest-latent observation whose low-fidelity error stayed under
/// `eps_high` — and measure it once at high fidelity. With no feasible
/// observation at all, ships dense (s = 0).
pub fn bo_only_head(
    workload: &Workload,
    layer: usize,
    head: usize,
    opts: &TuneOptions,
    ledger: &CostLedger,
) -> Result<TuneResult> {
    opts.validate()?;
    let eval = HeadEvaluator::new(workload, layer, head, opts.bounds, ledger)?;
    let stage1 = stage1_explore(
        |s| eval.eval_low(s),
        &opts.band,
        &opts.budget,
        &opts.gp,
        None,
    )?;
    let s_pick = stage1
        .observations
        .iter()
        .filter(|(_, y)| *y <= opts.band.eps_high)
        .map(|(s, _)| *s)
        .fold(0.0, f64::max);
    let (e, sp) = eval.eval_high(s_pick, TuneStage::Refine)?;
    let (evals_low, evals_high) = eval.counts();
    Ok(TuneResult {
        layer,
        head,
        method: TuneMethod::BoOnly,
        warm_started: false,
        s_best: s_pick,
        params: map_s_to_params(s_pick, &opts.bounds)?,
        error: e,
        sparsity: sp,
        fallback_applied: false,
        band_miss: false,
        evals_low,
        evals_high,
        validation_errors: Vec::new(),
        fallback_error: None,
        regret_trace: stage1.regret,
        stage1_observations: stage1.observations,
    })
}
