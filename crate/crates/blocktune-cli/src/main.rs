//! blocktune command line: offline calibration (`tune`), applying a
//! cached configuration to fresh inputs (`evaluate`), the two-fidelity
//! correlation study (`correlate`), and the drift monitor (`drift`).
//!
//! Exit codes: 0 success, 2 input error, 3 tuning failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use blocktune::cache::ConfigCache;
use blocktune::drift::{run_drift, DriftConfig, StructureShift};
use blocktune::ledger::{
    fidelity_rank_correlation, format_report_table, speedup_report, CostLedger, CostModel,
    GridBaselineConfig, TuneStage,
};
use blocktune::optimizer::{
    grid_search_head, random_search_head, tune_model, ErrorBand, TuneOptions,
};
use blocktune::sparse::{sparse_attention, Fidelity};
use blocktune::workload::{generate_head, Draw, StructureSpec, Workload};
use blocktune::{map_s_to_params, LatentBounds};

#[derive(Parser)]
#[command(
    name = "blocktune",
    about = "Self-tuning block-sparse attention thresholds",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Afbs,
    Grid,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Discover per-(layer, head) thresholds and write the config cache.
    Tune {
        /// Workload structure spec (TOML).
        #[arg(long)]
        workload: PathBuf,
        /// Output config cache (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.045)]
        eps_low: f64,
        #[arg(long, default_value_t = 0.055)]
        eps_high: f64,
        /// Overrides the workload spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Mode::Afbs)]
        mode: Mode,
        /// Grid resolution for --mode grid.
        #[arg(long, default_value_t = 40)]
        grid_points: usize,
        /// Evaluation budget for --mode random.
        #[arg(long, default_value_t = 50)]
        budget: usize,
        /// Tune head 0 per layer and broadcast to siblings.
        #[arg(long, default_value_t = false)]
        per_layer: bool,
        /// Write the tabular cost report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply a cached configuration to fresh draws and report per-head
    /// error and sparsity.
    Evaluate {
        #[arg(long)]
        workload: PathBuf,
        /// Config cache produced by `tune`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Error curves at both fidelities over a latent grid, with per-head
    /// Spearman rank correlation.
    Correlate {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value_t = 21)]
        grid_points: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stream batches through a cached configuration, watch worst-case
    /// error, and re-calibrate with the reduced budget on drift.
    Drift {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        batches: usize,
        /// Double the locality bandwidth from this batch on.
        #[arg(long)]
        shift_at: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the retuned cache if re-calibration fires.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drift log (one row per batch).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

enum Failure {
    /// Unreadable or inconsistent inputs -> exit 2.
    Input(String),
    /// Tuning produced no usable configuration -> exit 3.
    Tuning(String),
}

impl From<blocktune::Error> for Failure {
    fn from(e: blocktune::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Tuning(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_spec(path: &PathBuf, seed: Option<u64>) -> Result<StructureSpec, Failure> {
    let spec = StructureSpec::load(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

fn write_or_print(report: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match report {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Tune {
            workload,
            out,
            eps_low,
            eps_high,
            seed,
            mode,
            grid_points,
            budget,
            per_layer,
            report,
        } => {
            let spec = load_spec(&workload, seed)?;
            let band = ErrorBand { eps_low, eps_high };
            band.validate()?;
            let opts = TuneOptions {
                band,
                per_layer,
                ..TuneOptions::default()
            };
            let w = Workload::generate(&spec)?;
            let ledger = CostLedger::new();
            let started = Instant::now();
            let results = match mode {
                Mode::Afbs => tune_model(&w, &opts, &ledger)?,
                Mode::Grid => {
                    let mut rs = Vec::new();
                    for layer in 0..spec.layers {
                        for head in 0..spec.heads {
                            rs.push(grid_search_head(
                                &w,
                                layer,
                                head,
                                &band,
                                &opts.bounds,
                                grid_points,
                                &ledger,
                            )?);
                        }
                    }
                    rs
                }
                Mode::Random => {
                    let mut rs = Vec::new();
                    for layer in 0..spec.layers {
                        for head in 0..spec.heads {
                            let head_seed = spec
                                .seed
                                .wrapping_mul(1_000_003)
                                .wrapping_add((layer * spec.heads + head) as u64);
                            rs.push(random_search_head(
                                &w,
                                layer,
                                head,
                                &band,
                                &opts.bounds,
                                budget,
                                head_seed,
                                &ledger,
                            )?);
                        }
                    }
                    rs
                }
            };
            let wall = started.elapsed().as_secs_f64();
            if results.iter().all(|r| r.band_miss) {
                return Err(Failure::Tuning(
                    "no head produced an error inside the band; cache not written".into(),
                ));
            }
            let cache = ConfigCache::from_results(&spec.model_id(), band, opts.bounds, &results);
            cache
                .save(&out)
                .map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
            let cost_report = speedup_report(
                &results,
                &ledger,
                &CostModel::default(),
                &GridBaselineConfig::default(),
                wall,
            );
            let table = format_report_table(&cost_report);
            if let Some(path) = &report {
                std::fs::write(path, &table)
                    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            }
            let flagged = results.iter().filter(|r| r.band_miss).count();
            println!(
                "tuned {} heads ({} dense fallbacks); cache -> {}",
                results.len(),
                flagged,
                out.display()
            );
            println!(
                "modeled cost: measured {:.0} ms, paper {:.0} ms vs grid {:.0} ms (x{:.2}); {} evals vs {} (x{:.2}); wall {:.2} s",
                cost_report.measured_ms,
                cost_report.paper_ms,
                cost_report.grid_paper_ms,
                cost_report.paper_speedup,
                cost_report.total_evals_low + cost_report.total_evals_high,
                cost_report.grid_evals,
                cost_report.eval_count_ratio,
                wall
            );
            Ok(())
        }

        Command::Evaluate {
            workload,
            config,
            seed,
            report,
        } => {
            let spec = load_spec(&workload, seed)?;
            let cache = ConfigCache::load(&config)
                .map_err(|e| Failure::Input(format!("{}: {e}", config.display())))?;
            cache.check_compatible(&spec)?;
            let grid = spec.grid(Fidelity::High)?;
            let mut text = String::from("layer head error sparsity\n");
            for entry in &cache.entries {
                let draw = Draw::Fresh(spec.seed.wrapping_add(0x5eed));
                let t = generate_head(&spec, entry.layer, entry.head, Fidelity::High, draw)?;
                let dense =
                    blocktune::attention::dense_attention(&t.q, &t.k, &t.v, spec.causal)?;
                let (out, sparsity) =
                    sparse_attention(&t.q, &t.k, &t.v, &entry.params(), &grid)?;
                let error = blocktune::attention::relative_l1(&out, &dense)?;
                text.push_str(&format!(
                    "{} {} {:.6} {:.6}\n",
                    entry.layer, entry.head, error, sparsity
                ));
            }
            write_or_print(&report, &text)
        }

        Command::Correlate {
            workload,
            grid_points,
            seed,
            report,
        } => {
            if grid_points < 5 {
                return Err(Failure::Input(
                    "correlate needs at least 5 grid points".into(),
                ));
            }
            let spec = load_spec(&workload, seed)?;
            let bounds = LatentBounds::default();
            let ledger = CostLedger::new();
            let mut text = String::from("layer head rho\n");
            let mut rhos = Vec::new();
            for layer in 0..spec.layers {
                for head in 0..spec.heads {
                    let mut errs = [Vec::new(), Vec::new()];
                    for (fi, fid) in [Fidelity::Low, Fidelity::High].into_iter().enumerate() {
                        let t = generate_head(&spec, layer, head, fid, Draw::Tune)?;
                        let grid = spec.grid(fid)?;
                        let dense =
                            blocktune::attention::dense_attention(&t.q, &t.k, &t.v, spec.causal)?;
                        for i in 0..grid_points {
                            let s = i as f64 / (grid_points - 1) as f64;
                            let p = map_s_to_params(s, &bounds)?;
                            let (out, _) = sparse_attention(&t.q, &t.k, &t.v, &p, &grid)?;
                            errs[fi].push(blocktune::attention::relative_l1(&out, &dense)?);
                            ledger.record(layer, head, TuneStage::Correlate, fid);
                        }
                    }
                    match fidelity_rank_correlation(&errs[0], &errs[1]) {
                        Ok(rho) => {
                            rhos.push(rho);
                            text.push_str(&format!("{layer} {head} {rho:.4}\n"));
                        }
                        Err(_) => {
                            text.push_str(&format!("{layer} {head} undefined\n"));
                        }
                    }
                }
            }
            if rhos.is_empty() {
                return Err(Failure::Tuning(
                    "no head had a defined rank correlation".into(),
                ));
            }
            let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
            let var = rhos.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rhos.len() as f64;
            text.push_str(&format!(
                "mean {:.4} std {:.4} (n={})\n",
                mean,
                var.sqrt(),
                rhos.len()
            ));
            write_or_print(&report, &text)
        }

        Command::Drift {
            workload,
            config,
            batches,
            shift_at,
            seed,
            out,
            report,
        } => {
            if batches == 0 {
                return Err(Failure::Input("need at least one batch".into()));
            }
            let spec = load_spec(&workload, seed)?;
            let cache = ConfigCache::load(&config)
                .map_err(|e| Failure::Input(format!("{}: {e}", config.display())))?;
            let opts = TuneOptions {
                band: cache.band,
                ..TuneOptions::default()
            };
            let outcome = run_drift(
                &spec,
                &cache,
                batches,
                shift_at,
                StructureShift::double_bandwidth(),
                DriftConfig::default(),
                &opts,
                &CostLedger::new(),
            )?;
            let mut text = String::from("batch worst_error triggered retuned\n");
            for rec in &outcome.log {
                text.push_str(&format!(
                    "{} {:.6} {} {}\n",
                    rec.batch, rec.worst_error, rec.triggered, rec.retuned
                ));
            }
            match outcome.trigger_batch {
                Some(b) => text.push_str(&format!("re-calibration triggered at batch {b}\n")),
                None => text.push_str("no re-calibration triggered\n"),
            }
            write_or_print(&report, &text)?;
            if let (Some(path), true) = (&out, outcome.trigger_batch.is_some()) {
                outcome
                    .final_cache
                    .save(path)
                    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                println!("retuned cache -> {}", path.display());
            }
            Ok(())
        }
    }
}
