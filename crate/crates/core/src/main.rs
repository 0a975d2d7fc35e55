//! Command-line frontend: dataset generation, single-cell fits, the exact
//! small-instance oracle, design regularity, BvM diagnostics, and the
//! replication driver. Worker count for `replicate` defaults to the
//! `SEMIREG_WORKERS` environment variable.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;

use semireg::design::{compatibility, regularity_sampled, DesignMatrix};
use semireg::harness::{
    self, cell_dir_name, gen_dataset, load_coef_draws, ScenarioConfig,
};
use semireg::metrics::{bvm_report, limit_law};
use semireg::oracle;
use semireg::rng::{self, Stream};
use semireg::Result;

#[derive(Parser)]
#[command(name = "semireg", version, about = "Semiparametric Bayesian sparse regression")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one cell's dataset (X.csv, y.csv, truth.json, meta.json).
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        n_index: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Gibbs sampler on one cell and write chain + metrics.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        n_index: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive exact posterior for a small cell with errors fixed at
    /// N(0, sigma^2); prints model probabilities and moments as JSON.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        n_index: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Compatibility number phi(s) and restricted eigenvalue psi(s) of a
    /// design CSV; exact by enumeration, or randomized with --samples.
    Regularity {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        s: usize,
        /// randomized upper-bound mode with this many sampled supports
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// BvM diagnostics of a saved chain against the Gaussian limit law of
    /// the generating cell.
    Bvm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        n_index: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long)]
        chain: PathBuf,
    },
    /// Run every (n, replication) cell of a scenario into a run directory.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// overrides SEMIREG_WORKERS
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate a finished run into summary CSV tables.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Validate a config (or a canonical scenario s1..s4) and print the
    /// resolved per-n quantities; --emit writes the config JSON.
    Check {
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct OracleModelOut {
    support: Vec<usize>,
    prob: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct OracleOut {
    models: Vec<OracleModelOut>,
    dual_gap: f64,
    skipped_models: usize,
}

fn env_workers() -> Option<usize> {
    std::env::var("SEMIREG_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen {
            config,
            n_index,
            rep,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let ds = gen_dataset(&cfg, n_index, rep)?;
            std::fs::create_dir_all(&out)?;
            ds.x.save_csv(&out.join("X.csv"))?;
            let mut w = csv::Writer::from_path(out.join("y.csv"))?;
            w.write_record(["y"])?;
            for v in ds.y.iter() {
                w.write_record([v.to_string()])?;
            }
            w.flush()?;
            std::fs::write(
                out.join("truth.json"),
                serde_json::to_string_pretty(&ds.theta0)?,
            )?;
            let meta = serde_json::json!({
                "n": ds.x.n(),
                "p": ds.x.p(),
                "beta_min": cfg.truth.beta_min(ds.x.n(), ds.x.p()),
                "l1_budget_ratio": ds.l1_budget_ratio,
                "entry_bound": ds.entry_bound,
            });
            std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
            println!("wrote dataset to {}", out.display());
        }
        Cmd::Fit {
            config,
            n_index,
            rep,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let metrics = harness::run_cell(&cfg, n_index, rep, &out)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Cmd::Oracle {
            config,
            n_index,
            rep,
            sigma,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let ds = gen_dataset(&cfg, n_index, rep)?;
            let prior = cfg.coef_prior.build(ds.x.n(), ds.x.p())?;
            let res = oracle::exact_posterior(&ds.x, &ds.y, &prior, sigma)?;
            let mut models: Vec<OracleModelOut> = res
                .model_probs
                .iter()
                .map(|(s, &prob)| {
                    let m = &res.coef_moments[s];
                    OracleModelOut {
                        support: s.clone(),
                        prob,
                        mean: m.mean.clone(),
                        cov: m.cov.clone(),
                    }
                })
                .collect();
            models.sort_by(|a, b| b.prob.total_cmp(&a.prob));
            let out = OracleOut {
                models,
                dual_gap: res.dual_gap,
                skipped_models: res.skipped_models,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Regularity {
            design,
            s,
            samples,
            seed,
        } => {
            let x = DesignMatrix::load_csv(&design)?;
            let report = match samples {
                Some(k) => {
                    let mut rng = rng::derive(seed, 0, Stream::Aux);
                    regularity_sampled(&x, s, k, &mut rng)?
                }
                None => compatibility(&x, s)?,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Bvm {
            config,
            n_index,
            rep,
            chain,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let ds = gen_dataset(&cfg, n_index, rep)?;
            let eta0 = ds.eta0.as_ref().ok_or_else(|| {
                semireg::Error::Config("BvM diagnostics need a noise density".into())
            })?;
            let law = limit_law(&ds.x, &ds.y, &ds.theta0, eta0)?;
            let draws = load_coef_draws(&chain)?;
            let report = bvm_report(&draws, &law, ds.x.n())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Replicate {
            config,
            out,
            workers,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let workers = workers.or_else(env_workers);
            let run = harness::replicate(&cfg, &out, workers)?;
            let report_dir = harness::report(&run)?;
            println!("run complete: {}", run.display());
            println!("reports: {}", report_dir.display());
        }
        Cmd::Report { run } => {
            let report_dir = harness::report(&run)?;
            println!("reports: {}", report_dir.display());
        }
        Cmd::Check {
            config,
            scenario,
            emit,
        } => {
            let cfg = match (&config, &scenario) {
                (Some(path), _) => ScenarioConfig::load(path)?,
                (None, Some(name)) => ScenarioConfig::canonical(name)?,
                (None, None) => {
                    return Err(semireg::Error::Config(
                        "pass --config or --scenario".into(),
                    ))
                }
            };
            cfg.validate()?;
            println!("scenario '{}' is valid", cfg.name);
            println!("  replications: {}", cfg.replications);
            println!("  master seed:  {}", cfg.master_seed);
            for &n in &cfg.design.n_list {
                let p = cfg.design.p_rule.resolve(n);
                let prior = cfg.coef_prior.build(n, p)?;
                println!(
                    "  n = {n}: p = {p}, lambda = {:.4}, beta_min = {:.4}, cell dirs {}..",
                    prior.lambda,
                    cfg.truth.beta_min(n, p),
                    cell_dir_name(n, 0)
                );
            }
            if let Some(err_cfg) = &cfg.truth.error {
                let eta0 = err_cfg.build()?;
                let grid: Vec<f64> = (0..200).map(|i| -5.0 + 0.05 * i as f64).collect();
                let report = eta0.check_conditions(&grid);
                println!(
                    "  error density checks: {}",
                    serde_json::to_string(&report)?
                );
            } else {
                println!("  noiseless truth (Y = X theta0)");
            }
            if let Some(path) = emit {
                cfg.save(&path)?;
                println!("wrote config to {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
