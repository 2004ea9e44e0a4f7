//! Acceptance battery: one test per release criterion, each printing a
//! pass line with the measured values. Everything runs CPU-only in a few
//! minutes; tolerances are pinned in the assertions.

mod common;

use blocktune::attention::{dense_attention, relative_l1};
use blocktune::gp::{expected_improvement, matern52, GpModel, Observation};
use blocktune::latent::{map_s_to_params, LatentBounds};
use blocktune::ledger::{
    fidelity_rank_correlation, speedup_report, CostLedger, CostModel, GridBaselineConfig,
    TuneStage,
};
use blocktune::optimizer::{
    bo_only_head, random_search_head, stage2_refine, stage3_validate, tune_head_with,
    tune_model, TuneOptions, WarmStart,
};
use blocktune::sparse::{sparse_attention, sparsity_only, Fidelity};
use blocktune::suite::{
    ablation_band, ablation_seeds, ablation_spec, drift_band, drift_spec, standard_suite_spec,
    DRIFT_SEED,
};
use blocktune::workload::Workload;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

// Criterion 1: the worked tuning configuration falls out of the default
// latent map at s = 0.758.
#[test]
fn acceptance_01_worked_example_reproduction() {
    let p = map_s_to_params(0.758, &LatentBounds::default()).unwrap();
    assert!((p.tau_keep - 0.924).abs() <= 1e-3, "tau {}", p.tau_keep);
    assert!((p.theta - 0.091).abs() <= 1e-3, "theta {}", p.theta);
    assert!((p.lambda - -10.2).abs() <= 0.05, "lambda {}", p.lambda);
    println!(
        "acceptance 1 PASS: map(0.758) = ({:.4}, {:.4}, {:.3})",
        p.tau_keep, p.theta, p.lambda
    );
}

// Criterion 2: cost arithmetic in paper-accounting mode — 398 ms per
// cold head, 3038 ms for 12 layers vs 10080 ms grid (ratio >= 3.3),
// and 237 vs 2100 evaluations (ratio >= 8.8). Driven by a synthetic
// monotone evaluator so the budget identities are exact.
#[test]
fn acceptance_02_cost_arithmetic() {
    let opts = TuneOptions::default();
    let ledger = CostLedger::new();
    let mut results = Vec::new();
    let mut warm: Option<WarmStart> = None;
    for layer in 0..12 {
        let r = tune_head_with(
            |s| {
                ledger.record(layer, 0, TuneStage::Explore, Fidelity::Low);
                Ok(0.1 * s)
            },
            |s| {
                ledger.record(layer, 0, TuneStage::Refine, Fidelity::High);
                Ok((0.1 * s, s))
            },
            |_idx, s| {
                ledger.record(layer, 0, TuneStage::Validate, Fidelity::High);
                Ok((0.1 * s, s))
            },
            layer,
            0,
            &opts,
            warm.as_ref(),
        )
        .unwrap();
        assert!(!r.band_miss && !r.fallback_applied, "layer {layer}");
        warm = Some(WarmStart {
            observations: r.stage1_observations.clone(),
        });
        results.push(r);
    }
    assert_eq!((results[0].evals_low, results[0].evals_high), (15, 13));
    for r in &results[1..] {
        assert_eq!((r.evals_low, r.evals_high), (8, 11));
    }
    let report = speedup_report(
        &results,
        &ledger,
        &CostModel::default(),
        &GridBaselineConfig::default(),
        0.0,
    );
    assert_eq!(report.rows[0].paper_ms, 398.0, "per-layer cold");
    assert_eq!(report.paper_ms, 3038.0, "12-layer paper total");
    assert_eq!(report.grid_paper_ms, 10080.0);
    assert!(report.paper_speedup >= 3.3, "{}", report.paper_speedup);
    let evals = report.total_evals_low + report.total_evals_high;
    assert_eq!(evals, 237);
    assert_eq!(report.grid_evals, 2100);
    assert!(report.eval_count_ratio >= 8.8, "{}", report.eval_count_ratio);
    println!(
        "acceptance 2 PASS: cold 398 ms, total {} ms vs {} ms (x{:.2}); {} vs {} evals (x{:.2})",
        report.paper_ms,
        report.grid_paper_ms,
        report.paper_speedup,
        evals,
        report.grid_evals,
        report.eval_count_ratio
    );
}

// Criterion 3: bisection precision and the hand-simulated trace.
#[test]
fn acceptance_03_binary_search_precision() {
    let band = blocktune::optimizer::ErrorBand::default();
    let region = blocktune::gp::Region {
        s_low: 0.5,
        s_high: 1.0,
    };
    let out = stage2_refine(|s| Ok((0.1 * s, s)), &[region], &band, 4, 1).unwrap();
    let mids: Vec<f64> = out.steps.iter().map(|st| st.s_mid).collect();
    assert_eq!(mids, vec![0.75, 0.625, 0.5625, 0.53125]);
    assert_eq!(out.s_best, 0.53125);

    // Bracket width after 4 bisections of a unit-width region is exactly
    // 2^-4, for arbitrary feasibility patterns.
    for pattern in 0..16u32 {
        let mut mask = pattern;
        let out = stage2_refine(
            |s| {
                let feasible = mask & 1 == 0;
                mask >>= 1;
                Ok((if feasible { 0.05 } else { 0.1 }, s))
            },
            &[blocktune::gp::Region {
                s_low: 0.0,
                s_high: 1.0,
            }],
            &band,
            4,
            1,
        )
        .unwrap();
        let (mut lo, mut hi) = (0.0, 1.0);
        for st in &out.steps {
            if st.error <= band.eps_high {
                lo = st.s_mid;
            } else {
                hi = st.s_mid;
            }
        }
        assert!((hi - lo - 0.0625).abs() < 1e-12, "pattern {pattern}");
    }
    println!("acceptance 3 PASS: trace 0.75,0.625,0.5625,0.53125; final width 0.0625");
}

// Criterion 4: GP posterior vs a dense-solve oracle, EI vs Monte Carlo,
// and the kernel's reference value.
#[test]
fn acceptance_04_gp_correctness() {
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let mut max_gap = 0.0_f64;
    for _ in 0..50 {
        let n = 1 + (rng.random::<u64>() % 30) as usize;
        let obs: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), 0.2 * rng.random::<f64>(), 1.0))
            .collect();
        let model = GpModel::fit(
            obs.iter().map(|o| Observation::new(o.0, o.1)).collect(),
            0.2,
            1e-6,
        )
        .unwrap();
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            let (mu, var) = model.posterior(s);
            let (omu, ovar) = common::gp_oracle_posterior(&obs, 0.2, 1e-6, s);
            max_gap = max_gap.max((mu - omu).abs()).max((var - ovar).abs());
        }
    }
    assert!(max_gap <= 1e-8, "max gap {max_gap}");

    // EI closed form vs Monte Carlo, 1e5 samples per triple.
    let mut max_ei_gap = 0.0_f64;
    for _ in 0..50 {
        let mu = 0.2 * rng.random::<f64>();
        let sigma = 0.001 + 0.05 * rng.random::<f64>();
        let f_best = 0.2 * rng.random::<f64>();
        let closed = expected_improvement(mu, sigma, f_best);
        let mut acc = 0.0;
        for _ in 0..100_000 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            acc += (f_best - (mu + sigma * z)).max(0.0);
        }
        let mc = acc / 100_000.0;
        max_ei_gap = max_ei_gap.max((closed - mc).abs());
    }
    assert!(max_ei_gap <= 2e-3, "max EI gap {max_ei_gap}");

    let kernel_ref = matern52(0.0, 0.2, 0.2);
    assert!((kernel_ref - 0.5240).abs() <= 1e-4, "{kernel_ref}");
    println!(
        "acceptance 4 PASS: posterior gap {max_gap:.2e}, EI-MC gap {max_ei_gap:.2e}, matern52 {kernel_ref:.4}"
    );
}

// Criterion 5: simulator exactness at s = 0, sparsity monotonicity on a
// 21-point grid for all 20 heads, and oracle equivalence on 100 small
// random instances.
#[test]
fn acceptance_05_simulator_exactness_and_monotonicity() {
    let spec = standard_suite_spec(1);
    let workload = Workload::generate(&spec).unwrap();
    let bounds = LatentBounds::default();
    let heads: Vec<(usize, usize)> = (0..spec.layers)
        .flat_map(|l| (0..spec.heads).map(move |h| (l, h)))
        .collect();
    let worst_exact = heads
        .par_iter()
        .map(|&(layer, head)| {
            let mut worst = 0.0_f64;
            for fid in [Fidelity::Low, Fidelity::High] {
                let t = workload.tensors(layer, head, fid);
                let grid = spec.grid(fid).unwrap();
                let dense = dense_attention(&t.q, &t.k, &t.v, spec.causal).unwrap();
                let p0 = map_s_to_params(0.0, &bounds).unwrap();
                let (out, sp) = sparse_attention(&t.q, &t.k, &t.v, &p0, &grid).unwrap();
                assert_eq!(sp, 0.0);
                worst = worst.max(relative_l1(&out, &dense).unwrap());
            }
            // Monotone sparsity over the 21-point latent grid.
            let t = workload.tensors(layer, head, Fidelity::High);
            let grid = spec.grid(Fidelity::High).unwrap();
            let mut prev = -1.0;
            for i in 0..=20 {
                let s = i as f64 / 20.0;
                let p = map_s_to_params(s, &bounds).unwrap();
                let sp = sparsity_only(&t.q, &t.k, &p, &grid).unwrap();
                assert!(
                    sp >= prev,
                    "sparsity not monotone at ({layer},{head}) s={s}: {prev} -> {sp}"
                );
                prev = sp;
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst_exact <= 1e-6, "s=0 error {worst_exact}");

    // Oracle equivalence on 100 small instances (seq <= 4B).
    let mut rng = ChaCha12Rng::seed_from_u64(505);
    let mut worst_oracle = 0.0_f64;
    for trial in 0..100 {
        let b = [4, 8][trial % 2];
        let n = b * (1 + trial % 4);
        let causal = trial % 3 != 0;
        let d = 6;
        let q = blocktune::mat::Mat::from_fn(n, d, |_, _| rng.sample(rand_distr::StandardNormal));
        let k = blocktune::mat::Mat::from_fn(n, d, |_, _| rng.sample(rand_distr::StandardNormal));
        let v = blocktune::mat::Mat::from_fn(n, d, |_, _| rng.sample(rand_distr::StandardNormal));
        let grid = blocktune::sparse::BlockGrid::new(n, n, b, causal).unwrap();
        let p = map_s_to_params(rng.random::<f64>(), &bounds).unwrap();
        let (out, sp) = sparse_attention(&q, &k, &v, &p, &grid).unwrap();
        let (oracle_out, oracle_sp) = common::oracle_sparse_attention(&q, &k, &v, &p, &grid);
        assert_eq!(sp, oracle_sp, "trial {trial}");
        let gap = relative_l1(&out, &oracle_out).unwrap();
        worst_oracle = worst_oracle.max(gap);
    }
    assert!(worst_oracle <= 1e-6, "oracle gap {worst_oracle}");
    println!(
        "acceptance 5 PASS: s=0 error {worst_exact:.2e}, monotone 20/20 heads, oracle gap {worst_oracle:.2e}"
    );
}

// Criterion 6: mean Spearman correlation between fidelities >= 0.75 on
// the standard 20-head suite.
#[test]
fn acceptance_06_fidelity_correlation() {
    let spec = standard_suite_spec(1);
    let workload = Workload::generate(&spec).unwrap();
    let bounds = LatentBounds::default();
    let heads: Vec<(usize, usize)> = (0..spec.layers)
        .flat_map(|l| (0..spec.heads).map(move |h| (l, h)))
        .collect();
    let rhos: Vec<f64> = heads
        .par_iter()
        .filter_map(|&(layer, head)| {
            let mut errs = [Vec::new(), Vec::new()];
            for (fi, fid) in [Fidelity::Low, Fidelity::High].into_iter().enumerate() {
                let t = workload.tensors(layer, head, fid);
                let grid = spec.grid(fid).unwrap();
                let dense = dense_attention(&t.q, &t.k, &t.v, spec.causal).unwrap();
                for i in 0..=20 {
                    let s = i as f64 / 20.0;
                    let p = map_s_to_params(s, &bounds).unwrap();
                    let (out, _) = sparse_attention(&t.q, &t.k, &t.v, &p, &grid).unwrap();
                    errs[fi].push(relative_l1(&out, &dense).unwrap());
                }
            }
            fidelity_rank_correlation(&errs[0], &errs[1]).ok()
        })
        .collect();
    assert_eq!(rhos.len(), 20, "all heads have a defined correlation");
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    assert!(mean >= 0.75, "mean rho {mean}");
    println!("acceptance 6 PASS: mean rho {mean:.3} over {} heads", rhos.len());
}

// Criterion 7: stage-ablation ordering in medians over the 20-seed
// suite, accepted sparsity within 0.05 of the 1001-point constrained
// optimum on >= 90% of heads, and accepted error never above eps_high.
#[test]
fn acceptance_07_optimizer_quality() {
    let band = ablation_band();
    let rows: Vec<(f64, f64, f64, f64, f64)> = ablation_seeds()
        .into_par_iter()
        .flat_map(|seed| {
            let spec = ablation_spec(seed);
            let workload = Workload::generate(&spec).unwrap();
            let opts = TuneOptions {
                band,
                ..TuneOptions::default()
            };
            let full = tune_model(&workload, &opts, &CostLedger::new()).unwrap();
            full.into_iter()
                .map(|r| {
                    let bo =
                        bo_only_head(&workload, r.layer, r.head, &opts, &CostLedger::new())
                            .unwrap();
                    let rnd = random_search_head(
                        &workload,
                        r.layer,
                        r.head,
                        &band,
                        &opts.bounds,
                        50,
                        1000 + seed,
                        &CostLedger::new(),
                    )
                    .unwrap();
                    // 1001-point fine-grid constrained optimum.
                    let t = workload.tensors(r.layer, r.head, Fidelity::High);
                    let grid = spec.grid(Fidelity::High).unwrap();
                    let dense = dense_attention(&t.q, &t.k, &t.v, spec.causal).unwrap();
                    let optimum = (0..1001)
                        .into_par_iter()
                        .map(|i| {
                            let s = i as f64 / 1000.0;
                            let p = map_s_to_params(s, &opts.bounds).unwrap();
                            let (out, sp) =
                                sparse_attention(&t.q, &t.k, &t.v, &p, &grid).unwrap();
                            let e = relative_l1(&out, &dense).unwrap();
                            if e <= band.eps_high {
                                sp
                            } else {
                                0.0
                            }
                        })
                        .reduce(|| 0.0, f64::max);
                    (r.sparsity, bo.sparsity, rnd.sparsity, optimum, r.error)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let full: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let bo: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rnd: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let med_full = common::median(&full);
    let med_bo = common::median(&bo);
    let med_rnd = common::median(&rnd);
    // <= with a tie tolerance far below one sparsity quantum (1/288).
    let eps = 1e-9;
    assert!(
        med_rnd <= med_bo + eps && med_bo <= med_full + eps,
        "ordering violated: random {med_rnd} / bo-only {med_bo} / full {med_full}"
    );
    let within = rows.iter().filter(|r| r.3 - r.0 <= 0.05).count();
    assert!(
        within * 10 >= rows.len() * 9,
        "within-0.05 of optimum on {within}/{} heads",
        rows.len()
    );
    for (i, r) in rows.iter().enumerate() {
        assert!(r.4 <= band.eps_high, "head {i}: accepted error {}", r.4);
    }
    println!(
        "acceptance 7 PASS: medians random {med_rnd:.4} <= bo-only {med_bo:.4} <= full {med_full:.4}; within 0.05 on {within}/{}; accepted error always <= {}",
        rows.len(),
        band.eps_high
    );
}

// Criterion 8: an adversarial validation set forces the one-shot
// fallback; the latent value is reduced by exactly 10% and flagged.
#[test]
fn acceptance_08_fallback_behavior() {
    let band = blocktune::optimizer::ErrorBand::default();
    let s_best = 0.6171875;
    let out = stage3_validate(
        |idx, s| {
            if s == s_best {
                // Adversarial: input 3 blows the band at the candidate.
                Ok((if idx == 3 { 0.2 } else { 0.05 }, 0.5))
            } else {
                Ok((0.09, 0.45))
            }
        },
        s_best,
        0.051,
        0.5,
        &band,
        5,
    )
    .unwrap();
    assert!(out.fallback_applied);
    assert_eq!(out.s_final.to_bits(), (0.9 * s_best).to_bits(), "bit-exact");
    assert_eq!(out.validation_errors.len(), 5);
    assert_eq!(out.fallback_error, Some(0.09));
    println!(
        "acceptance 8 PASS: fallback {} -> {} (bit-exact 0.9x), flagged",
        s_best, out.s_final
    );
}

// Criterion 10: the constructed bandwidth-doubling shift triggers
// re-calibration and the retuned cache restores worst-case error on
// >= 90% of heads.
#[test]
fn acceptance_10_drift_recalibration() {
    use blocktune::cache::ConfigCache;
    use blocktune::drift::{evaluate_config, run_drift, DriftConfig, StructureShift};
    use blocktune::workload::Draw;

    let spec = drift_spec(DRIFT_SEED);
    let band = drift_band();
    let opts = TuneOptions {
        band,
        ..TuneOptions::default()
    };
    let workload = Workload::generate(&spec).unwrap();
    let results = tune_model(&workload, &opts, &CostLedger::new()).unwrap();
    assert!(results.iter().all(|r| !r.band_miss));
    let cache = ConfigCache::from_results(&spec.model_id(), band, opts.bounds, &results);

    // Stationary stream: no trigger across 200 batches.
    let quiet = run_drift(
        &spec,
        &cache,
        200,
        None,
        StructureShift::double_bandwidth(),
        DriftConfig::default(),
        &opts,
        &CostLedger::new(),
    )
    .unwrap();
    assert!(quiet.trigger_batch.is_none(), "spurious trigger");

    // Bandwidth doubles at batch 50: trigger by batch 150, then the
    // reduced-budget warm retune restores the post-shift errors.
    let shifted = run_drift(
        &spec,
        &cache,
        200,
        Some(50),
        StructureShift::double_bandwidth(),
        DriftConfig::default(),
        &opts,
        &CostLedger::new(),
    )
    .unwrap();
    let trigger = shifted.trigger_batch.expect("shift must trigger");
    assert!(trigger <= 150, "trigger at {trigger}");
    let shifted_spec = StructureShift::double_bandwidth().apply(&spec);
    let mut restored = 0;
    for e in &shifted.final_cache.entries {
        let (err, _) = evaluate_config(
            &shifted_spec,
            e.layer,
            e.head,
            &e.params(),
            Draw::Fresh(424_242),
        )
        .unwrap();
        if err <= band.eps_high {
            restored += 1;
        }
    }
    let total = shifted.final_cache.entries.len();
    assert!(
        restored * 10 >= total * 9,
        "restored {restored}/{total} heads"
    );
    println!(
        "acceptance 10 PASS: no spurious trigger; shift trigger at batch {trigger}; restored {restored}/{total} heads"
    );
}
