//! Browser demo bindings: three interactive views over the tuner, each
//! returning JSON for the static page to render.
//!
//! The demo workload is a single head at desk scale (128/256 tokens,
//! 16-wide blocks) so every call stays interactive in the browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use blocktune::attention::{dense_attention, relative_l1};
use blocktune::gp::{extract_low_ucb_regions, GpModel, Observation};
use blocktune::latent::{map_s_to_params, LatentBounds};
use blocktune::ledger::{CostLedger, TuneStage};
use blocktune::optimizer::{
    stage2_with_budget, stage3_validate, tune_head, ErrorBand, GpConfig, HeadEvaluator,
    TuneOptions,
};
use blocktune::sparse::{sparse_attention, sparse_attention_trace, Fidelity, PairState};
use blocktune::workload::{generate_head, Draw, StructureSpec, Workload};

fn demo_spec(seed: u64, bandwidth: usize, sinks: usize, rank: usize, noise: f64) -> StructureSpec {
    StructureSpec {
        layers: 1,
        heads: 1,
        head_dim: 16,
        seq_len_low: 128,
        seq_len_high: 256,
        block_size: 16,
        causal: true,
        bandwidth,
        sinks: sinks.min(64),
        rank,
        noise: noise.max(0.0),
        seed,
        ..StructureSpec::default()
    }
}

fn err_json(e: impl std::fmt::Display) -> String {
    format!("{{\"error\":\"{e}\"}}")
}

#[derive(Serialize)]
struct MaskPreview {
    n_blocks: usize,
    block_size: usize,
    /// Per-tile states, row-major: 0 inadmissible, 1 pruned, 2 skipped,
    /// 3 survived.
    states: Vec<u8>,
    tau_keep: f64,
    theta: f64,
    lambda: f64,
    error: f64,
    sparsity: f64,
}

/// Tile map of the sparse mask at latent value `s`, against the dense
/// reference of the same head.
#[wasm_bindgen]
pub fn mask_preview(
    seed: u64,
    bandwidth: usize,
    sinks: usize,
    rank: usize,
    noise: f64,
    s: f64,
) -> String {
    let spec = demo_spec(seed, bandwidth, sinks, rank, noise);
    let run = || -> blocktune::Result<MaskPreview> {
        let t = generate_head(&spec, 0, 0, Fidelity::High, Draw::Tune)?;
        let grid = spec.grid(Fidelity::High)?;
        let params = map_s_to_params(s, &LatentBounds::default())?;
        let dense = dense_attention(&t.q, &t.k, &t.v, spec.causal)?;
        let trace = sparse_attention_trace(&t.q, &t.k, &t.v, &params, &grid)?;
        let error = relative_l1(&trace.output, &dense)?;
        Ok(MaskPreview {
            n_blocks: grid.n_query_blocks,
            block_size: grid.block_size,
            states: trace
                .states
                .iter()
                .map(|st| match st {
                    PairState::Inadmissible => 0,
                    PairState::Pruned => 1,
                    PairState::Skipped => 2,
                    PairState::Survived => 3,
                })
                .collect(),
            tau_keep: params.tau_keep,
            theta: params.theta,
            lambda: params.lambda,
            error,
            sparsity: trace.sparsity,
        })
    };
    match run() {
        Ok(v) => serde_json::to_string(&v).unwrap(),
        Err(e) => err_json(e),
    }
}

#[derive(Serialize)]
struct Landscape {
    s: Vec<f64>,
    error_low: Vec<f64>,
    error_high: Vec<f64>,
    sparsity_high: Vec<f64>,
}

/// Error and sparsity curves over the latent line at both fidelities.
#[wasm_bindgen]
pub fn landscape(
    seed: u64,
    bandwidth: usize,
    sinks: usize,
    rank: usize,
    noise: f64,
    points: usize,
) -> String {
    let spec = demo_spec(seed, bandwidth, sinks, rank, noise);
    let points = points.clamp(5, 101);
    let bounds = LatentBounds::default();
    let run = || -> blocktune::Result<Landscape> {
        let mut out = Landscape {
            s: Vec::new(),
            error_low: Vec::new(),
            error_high: Vec::new(),
            sparsity_high: Vec::new(),
        };
        for fid in [Fidelity::Low, Fidelity::High] {
            let t = generate_head(&spec, 0, 0, fid, Draw::Tune)?;
            let grid = spec.grid(fid)?;
            let dense = dense_attention(&t.q, &t.k, &t.v, spec.causal)?;
            for i in 0..points {
                let s = i as f64 / (points - 1) as f64;
                let p = map_s_to_params(s, &bounds)?;
                let (o, sp) = sparse_attention(&t.q, &t.k, &t.v, &p, &grid)?;
                let e = relative_l1(&o, &dense)?;
                match fid {
                    Fidelity::Low => {
                        out.s.push(s);
                        out.error_low.push(e);
                    }
                    Fidelity::High => {
                        out.error_high.push(e);
                        out.sparsity_high.push(sp);
                    }
                }
            }
        }
        Ok(out)
    };
    match run() {
        Ok(v) => serde_json::to_string(&v).unwrap(),
        Err(e) => err_json(e),
    }
}

#[derive(Serialize)]
struct TuneDemo {
    observations: Vec<(f64, f64)>,
    gp_s: Vec<f64>,
    gp_mu: Vec<f64>,
    gp_sigma: Vec<f64>,
    regions: Vec<(f64, f64)>,
    steps: Vec<StepOut>,
    validation_errors: Vec<f64>,
    fallback_applied: bool,
    s_best: f64,
    tau_keep: f64,
    theta: f64,
    lambda: f64,
    error: f64,
    sparsity: f64,
    evals_low: usize,
    evals_high: usize,
}

#[derive(Serialize)]
struct StepOut {
    region: usize,
    s: f64,
    error: f64,
    sparsity: f64,
    recorded: bool,
}

/// Run the full three-stage pipeline on one head and return everything
/// a plot needs: Stage-1 samples and posterior, the extracted regions,
/// the bisection trace, and the accepted configuration.
#[wasm_bindgen]
pub fn tune_demo(
    seed: u64,
    bandwidth: usize,
    sinks: usize,
    rank: usize,
    noise: f64,
    eps_low: f64,
    eps_high: f64,
) -> String {
    let spec = demo_spec(seed, bandwidth, sinks, rank, noise);
    let band = ErrorBand { eps_low, eps_high };
    let opts = TuneOptions {
        band,
        ..TuneOptions::default()
    };
    let run = || -> blocktune::Result<TuneDemo> {
        band.validate()?;
        let workload = Workload::generate(&spec)?;
        let ledger = CostLedger::new();
        let result = tune_head(&workload, 0, 0, &opts, None, &ledger)?;

        // Rebuild the final Stage-1 model from the recorded observations
        // (a refit on the same data is the same model).
        let gp_cfg = GpConfig::default();
        let model = GpModel::fit(
            result
                .stage1_observations
                .iter()
                .map(|&(s, y)| Observation::new(s, y))
                .collect(),
            gp_cfg.length_scale,
            gp_cfg.noise_var,
        )?;
        let regions = extract_low_ucb_regions(&model, band.eps_high, gp_cfg.ucb_beta);

        // Replay Stage 2 for its trace (the evaluator is deterministic,
        // so this reproduces the tuning run's bisections).
        let eval = HeadEvaluator::new(&workload, 0, 0, opts.bounds, &ledger)?;
        let stage2 = stage2_with_budget(
            |s| eval.eval_high(s, TuneStage::Refine),
            &regions,
            &band,
            opts.budget.binary_iters,
            opts.budget.regions_refined,
        )?;
        let steps = stage2
            .steps
            .iter()
            .map(|st| StepOut {
                region: st.region_index,
                s: st.s_mid,
                error: st.error,
                sparsity: st.sparsity,
                recorded: st.recorded,
            })
            .collect();
        // And Stage 3 for the validation picture.
        let stage3 = if stage2.band_miss {
            None
        } else {
            Some(stage3_validate(
                |idx, s| eval.eval_validation(idx, s),
                stage2.s_best,
                stage2.error,
                stage2.sparsity,
                &band,
                opts.budget.validation_inputs,
            )?)
        };

        let mut gp_s = Vec::with_capacity(101);
        let mut gp_mu = Vec::with_capacity(101);
        let mut gp_sigma = Vec::with_capacity(101);
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let (mu, var) = model.posterior(s);
            gp_s.push(s);
            gp_mu.push(mu);
            gp_sigma.push(var.sqrt());
        }

        Ok(TuneDemo {
            observations: result.stage1_observations.clone(),
            gp_s,
            gp_mu,
            gp_sigma,
            regions: regions.iter().map(|r| (r.s_low, r.s_high)).collect(),
            steps,
            validation_errors: stage3
                .as_ref()
                .map(|s3| s3.validation_errors.clone())
                .unwrap_or_default(),
            fallback_applied: result.fallback_applied,
            s_best: result.s_best,
            tau_keep: result.params.tau_keep,
            theta: result.params.theta,
            lambda: result.params.lambda,
            error: result.error,
            sparsity: result.sparsity,
            evals_low: result.evals_low,
            evals_high: result.evals_high,
        })
    };
    match run() {
        Ok(v) => serde_json::to_string(&v).unwrap(),
        Err(e) => err_json(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_preview_returns_full_tile_grid() {
        let text = mask_preview(7, 32, 1, 0, 0.05, 0.6);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("error").and_then(|e| e.as_str()).is_none(), "{text}");
        let n = v["n_blocks"].as_u64().unwrap() as usize;
        assert_eq!(n, 16);
        assert_eq!(v["states"].as_array().unwrap().len(), n * n);
    }

    #[test]
    fn landscape_curves_are_aligned() {
        let text = landscape(7, 32, 1, 0, 0.05, 21);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let n = v["s"].as_array().unwrap().len();
        assert_eq!(n, 21);
        assert_eq!(v["error_high"].as_array().unwrap().len(), n);
        assert_eq!(v["sparsity_high"].as_array().unwrap().len(), n);
    }

    #[test]
    fn tune_demo_runs_the_full_pipeline() {
        let text = tune_demo(7, 32, 1, 0, 0.05, 0.02, 0.12);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["observations"].as_array().unwrap().len(), 15);
        assert_eq!(v["gp_mu"].as_array().unwrap().len(), 101);
        assert!(!v["regions"].as_array().unwrap().is_empty());
        assert_eq!(v["evals_low"].as_u64().unwrap(), 15);
    }

    #[test]
    fn invalid_band_reports_an_error_payload() {
        let text = tune_demo(7, 32, 1, 0, 0.05, 0.5, 0.1);
        assert!(text.contains("\"error\""));
    }
}
