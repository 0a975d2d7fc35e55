//! Scenario configs, the seeded replication driver, and report generation.
//!
//! A run directory holds one `manifest.json` plus one directory per
//! (sample size, replication) cell. Every random stream inside a cell is
//! derived from (master seed, cell index, stream id), so cells are
//! independent, individually reproducible, and restartable: `replicate`
//! skips any cell whose `metrics.json` already exists.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::coef_prior::{CoefPriorBlock, SparseCoefficient};
use crate::design::{entry_bound_constant, gen_design, DesignKind, DesignMatrix};
use crate::dpmix::DpPriorBlock;
use crate::error_density::{ErrorDensityConfig, ErrorDensitySpec};
use crate::metrics::{
    bvm_report, coef_errors, hellinger, limit_law, BvmReport, CoefErrorSummary,
};
use crate::rng::{self, Stream};
use crate::sampler::{run_chain, ChainOutput, Priors, SamplerConfig};
use crate::{Error, Result};

/// How the column count follows the sample size.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PRule {
    /// p = round(factor * n), at least 2.
    Multiple { factor: f64 },
    Fixed { p: usize },
}

impl PRule {
    pub fn resolve(&self, n: usize) -> usize {
        match self {
            PRule::Multiple { factor } => ((factor * n as f64).round() as usize).max(2),
            PRule::Fixed { p } => *p,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DesignBlock {
    pub kind: DesignKind,
    pub n_list: Vec<usize>,
    pub p_rule: PRule,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SignRule {
    Alternating,
    Random,
}

/// Rule generating the sparse truth: s0 active coordinates whose smallest
/// magnitude is `beta_min_factor * sqrt(s0 log(p) / n)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TruthBlock {
    pub s0: usize,
    pub beta_min_factor: f64,
    pub sign_rule: SignRule,
    /// `null` means noiseless data: Y = X theta0 exactly.
    pub error: Option<ErrorDensityConfig>,
}

impl TruthBlock {
    /// The beta-min magnitude at a given (n, p).
    pub fn beta_min(&self, n: usize, p: usize) -> f64 {
        if self.s0 == 0 {
            return 0.0;
        }
        self.beta_min_factor * (self.s0 as f64 * (p as f64).ln() / n as f64).sqrt()
    }

    fn gen_theta0<R: Rng>(&self, n: usize, p: usize, rng: &mut R) -> Result<SparseCoefficient> {
        if self.s0 == 0 {
            return Ok(SparseCoefficient::empty());
        }
        if self.s0 > p {
            return Err(Error::Config(format!("s0 = {} exceeds p = {p}", self.s0)));
        }
        let bmin = self.beta_min(n, p);
        let mut support = rand::seq::index::sample(rng, p, self.s0).into_vec();
        support.sort_unstable();
        let values = support
            .iter()
            .enumerate()
            .map(|(a, _)| {
                // spread magnitudes upward from exactly beta-min
                let mag = bmin * (1.0 + 0.5 * a as f64 / self.s0 as f64);
                let sign = match self.sign_rule {
                    SignRule::Alternating => {
                        if a % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    SignRule::Random => {
                        if rng.gen::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                sign * mag
            })
            .collect();
        SparseCoefficient::new(support, values, p)
    }
}

/// One canonical experiment: design rule, truth rule, prior blocks, sampler
/// settings, and the replication plan.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub design: DesignBlock,
    pub truth: TruthBlock,
    pub coef_prior: CoefPriorBlock,
    pub dp_prior: DpPriorBlock,
    pub sampler: SamplerConfig,
    pub replications: usize,
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.design.n_list.is_empty() {
            return Err(Error::Config("n_list must be non-empty".into()));
        }
        if !self.design.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("n_list must be strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.truth.s0 > 0 && self.truth.beta_min_factor <= 0.0 {
            return Err(Error::Config(
                "beta_min_factor must be positive when s0 > 0".into(),
            ));
        }
        self.sampler.validate()?;
        // prior blocks must resolve at every cell size
        for &n in &self.design.n_list {
            let p = self.design.p_rule.resolve(n);
            if self.truth.s0 > p {
                return Err(Error::Config(format!("s0 = {} exceeds p = {p}", self.truth.s0)));
            }
            self.coef_prior.build(n, p)?;
            self.dp_prior.build(n)?;
        }
        if let Some(err) = &self.truth.error {
            err.build()?;
        }
        Ok(())
    }

    /// Resolved prior bundle for one cell size.
    pub fn priors(&self, n: usize, p: usize) -> Result<Priors> {
        Ok(Priors {
            coef: self.coef_prior.build(n, p)?,
            dp: self.dp_prior.build(n)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        Ok(std::fs::write(path, text)?)
    }

    /// The four shipped scenarios: `s1` Gaussian errors with beta-min
    /// satisfied, `s2` bimodal symmetrized two-point errors, `s3`
    /// power-exponential errors with a heavy score (selection hypotheses
    /// violated), `s4` the null model.
    pub fn canonical(name: &str) -> Result<Self> {
        use crate::coef_prior::{LambdaChoice, LambdaRegime};
        use crate::dpmix::TruncMode;
        let base = |error: Option<ErrorDensityConfig>, s0: usize, trunc: TruncMode| Self {
            name: name.to_string(),
            design: DesignBlock {
                kind: DesignKind::IidGaussian,
                n_list: vec![100, 200, 400],
                p_rule: PRule::Multiple { factor: 2.0 },
            },
            truth: TruthBlock {
                s0,
                beta_min_factor: 4.0,
                sign_rule: SignRule::Alternating,
                error,
            },
            coef_prior: CoefPriorBlock {
                a4: 2.0,
                lambda: LambdaChoice::Named(LambdaRegime::Small),
            },
            dp_prior: DpPriorBlock {
                trunc_mode: trunc,
                ..DpPriorBlock::default()
            },
            sampler: SamplerConfig::default(),
            replications: 30,
            master_seed: 20_240_901,
        };
        use crate::dpmix::TruncMode::{Bvm, Rate};
        let cfg = match name {
            "s1" => base(Some(ErrorDensityConfig::Gaussian { sigma0: 1.0 }), 3, Bvm { tau: 2.0 }),
            "s2" => base(
                Some(ErrorDensityConfig::SymmetrizedTwoPointNormal { z0: 2.0, sigma0: 1.0 }),
                3,
                Rate,
            ),
            "s3" => base(
                Some(ErrorDensityConfig::PowerExponential { a: 1.0, b: 4.0 }),
                3,
                Rate,
            ),
            "s4" => base(Some(ErrorDensityConfig::Gaussian { sigma0: 1.0 }), 0, Rate),
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario '{other}' (expected s1..s4)"
                )))
            }
        };
        Ok(cfg)
    }
}

/// Stable cell index for the counter-based seeding.
pub fn cell_id(n_index: usize, rep: usize) -> u64 {
    ((n_index as u64) << 32) | rep as u64
}

pub fn cell_dir_name(n: usize, rep: usize) -> String {
    format!("cell_n{n}_r{rep}")
}

/// One generated dataset plus the quantities recorded at generation time.
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: DVector<f64>,
    pub theta0: SparseCoefficient,
    pub eta0: Option<ErrorDensitySpec>,
    /// lambda * ||theta0||_1 / (s0 log p); 0 for the null truth.
    pub l1_budget_ratio: f64,
    /// max |x_ij| / sqrt(log p); NaN when p < 2.
    pub entry_bound: f64,
}

pub fn gen_dataset(cfg: &ScenarioConfig, n_index: usize, rep: usize) -> Result<Dataset> {
    cfg.validate()?;
    let n = *cfg
        .design
        .n_list
        .get(n_index)
        .ok_or_else(|| Error::Config(format!("n_index {n_index} out of range")))?;
    if rep >= cfg.replications {
        return Err(Error::Config(format!("rep {rep} out of range")));
    }
    let p = cfg.design.p_rule.resolve(n);
    let cell = cell_id(n_index, rep);
    let design_seed = rng::derive(cfg.master_seed, cell, Stream::Design).gen::<u64>();
    let x = gen_design(n, p, cfg.design.kind, design_seed)?;
    let mut trng = rng::derive(cfg.master_seed, cell, Stream::Truth);
    let theta0 = cfg.truth.gen_theta0(n, p, &mut trng)?;
    let eta0 = cfg.truth.error.as_ref().map(|c| c.build()).transpose()?;
    let mut y = x.predict(&theta0.support, &theta0.values);
    if let Some(eta) = &eta0 {
        let mut nrng = rng::derive(cfg.master_seed, cell, Stream::Noise);
        for i in 0..n {
            y[i] += eta.sample_one(&mut nrng);
        }
    }
    let lambda = cfg.coef_prior.build(n, p)?.lambda;
    let s0 = cfg.truth.s0;
    let l1_budget_ratio = if s0 == 0 {
        0.0
    } else {
        lambda * theta0.l1_norm() / (s0 as f64 * (p as f64).ln())
    };
    let entry_bound = if p >= 2 {
        entry_bound_constant(&x)?
    } else {
        f64::NAN
    };
    Ok(Dataset {
        x,
        y,
        theta0,
        eta0,
        l1_budget_ratio,
        entry_bound,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageRow {
    pub j: usize,
    pub theta0: f64,
    pub lo: f64,
    pub hi: f64,
    pub covered: bool,
}

/// Everything the report needs from one finished cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellMetrics {
    pub n: usize,
    pub p: usize,
    pub n_index: usize,
    pub rep: usize,
    pub errors: CoefErrorSummary,
    /// posterior mass of {S = S0} / strict supersets of S0
    pub exact_mass: f64,
    pub superset_mass: f64,
    pub modal_is_true: bool,
    /// posterior mass of each model size, index = |S|
    pub size_mass: Vec<f64>,
    pub median_model_size: f64,
    /// median Hellinger distance of thinned mixture snapshots to eta0;
    /// NaN when the truth is noiseless
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub hellinger_median: f64,
    pub bvm: Option<BvmReport>,
    /// 90% equal-tailed marginal credible intervals, one row per j in S0
    pub coverage: Vec<CoverageRow>,
    pub l1_budget_ratio: f64,
    pub entry_bound: f64,
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub sigma_accept_rate: f64,
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub flip_accept_rate: f64,
    pub ridge_events: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Summarize one finished chain against the generating truth.
pub fn summarize_cell(
    n_index: usize,
    rep: usize,
    ds: &Dataset,
    chain: &ChainOutput,
) -> Result<CellMetrics> {
    let n = ds.x.n();
    let p = ds.x.p();
    let draws = chain.coef_draws();
    let errors = coef_errors(&draws, &ds.theta0, &ds.x)?;
    let s0 = &ds.theta0.support;

    let posterior = chain.model_posterior();
    let exact_mass = posterior.get(s0).copied().unwrap_or(0.0);
    let mut superset_mass = 0.0;
    let mut modal: (f64, Vec<usize>) = (-1.0, Vec::new());
    for (model, mass) in &posterior {
        if model.len() > s0.len() && s0.iter().all(|j| model.binary_search(j).is_ok()) {
            superset_mass += mass;
        }
        if *mass > modal.0 {
            modal = (*mass, model.clone());
        }
    }
    let modal_is_true = modal.1 == *s0;

    let max_size = draws.iter().map(|d| d.len()).max().unwrap_or(0);
    let mut size_mass = vec![0.0; max_size + 1];
    let w = 1.0 / draws.len() as f64;
    for d in &draws {
        size_mass[d.len()] += w;
    }
    let mut sizes: Vec<f64> = draws.iter().map(|d| d.len() as f64).collect();
    sizes.sort_by(f64::total_cmp);
    let median_model_size = quantile(&sizes, 0.5);

    let hellinger_median = match &ds.eta0 {
        Some(eta0) if !chain.density_draws.is_empty() => {
            let mut hs: Vec<f64> = chain
                .density_draws
                .iter()
                .map(|mix| hellinger(mix, eta0))
                .collect::<Result<_>>()?;
            hs.sort_by(f64::total_cmp);
            quantile(&hs, 0.5)
        }
        _ => f64::NAN,
    };

    let bvm = match &ds.eta0 {
        Some(eta0) if !s0.is_empty() => {
            let law = limit_law(&ds.x, &ds.y, &ds.theta0, eta0)?;
            Some(bvm_report(&draws, &law, n)?)
        }
        _ => None,
    };

    let mut coverage = Vec::with_capacity(s0.len());
    for (a, &j) in s0.iter().enumerate() {
        let mut vals: Vec<f64> = draws
            .iter()
            .map(|d| match d.support.binary_search(&j) {
                Ok(b) => d.values[b],
                Err(_) => 0.0,
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        let lo = quantile(&vals, 0.05);
        let hi = quantile(&vals, 0.95);
        let t = ds.theta0.values[a];
        coverage.push(CoverageRow {
            j,
            theta0: t,
            lo,
            hi,
            covered: lo <= t && t <= hi,
        });
    }

    Ok(CellMetrics {
        n,
        p,
        n_index,
        rep,
        errors,
        exact_mass,
        superset_mass,
        modal_is_true,
        size_mass,
        median_model_size,
        hellinger_median,
        bvm,
        coverage,
        l1_budget_ratio: ds.l1_budget_ratio,
        entry_bound: ds.entry_bound,
        sigma_accept_rate: chain.sigma_accept_rate,
        flip_accept_rate: chain.flip_accept_rate,
        ridge_events: chain.ridge_events,
    })
}

/// Generate, fit, summarize, and persist one cell into `dir`.
pub fn run_cell(cfg: &ScenarioConfig, n_index: usize, rep: usize, dir: &Path) -> Result<CellMetrics> {
    std::fs::create_dir_all(dir)?;
    let ds = gen_dataset(cfg, n_index, rep)?;
    let n = ds.x.n();
    let p = ds.x.p();
    let priors = cfg.priors(n, p)?;
    let cell = cell_id(n_index, rep);
    let chain_rng = rng::derive(cfg.master_seed, cell, Stream::Chain);
    let chain = run_chain(&ds.x, &ds.y, &priors, &cfg.sampler, chain_rng)?;
    chain.save_csv(&dir.join("chain.csv"))?;
    chain.save_sidecar(&dir.join("chain.json"))?;
    let metrics = summarize_cell(n_index, rep, &ds, &chain)?;
    let text = serde_json::to_string_pretty(&metrics)?;
    std::fs::write(dir.join("metrics.json"), text)?;
    Ok(metrics)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellRef {
    pub n_index: usize,
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub dir: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub cells: Vec<CellRef>,
}

/// SHA-256 of the canonical JSON serialization; changes whenever any prior,
/// design, truth, or sampler parameter changes.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn cell_refs(cfg: &ScenarioConfig) -> Vec<CellRef> {
    let mut cells = Vec::new();
    for (n_index, &n) in cfg.design.n_list.iter().enumerate() {
        let p = cfg.design.p_rule.resolve(n);
        for rep in 0..cfg.replications {
            cells.push(CellRef {
                n_index,
                n,
                p,
                rep,
                dir: cell_dir_name(n, rep),
            });
        }
    }
    cells
}

/// Run every cell of the plan into `out_dir`, skipping cells whose
/// `metrics.json` already exists. Per-cell failures are written to the
/// cell's `error.txt` and do not stop the run. `workers = None` uses the
/// default thread count.
pub fn replicate(cfg: &ScenarioConfig, out_dir: &Path, workers: Option<usize>) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let cells = cell_refs(cfg);
    let manifest = Manifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg)?,
        master_seed: cfg.master_seed,
        cells: cells.clone(),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    cfg.save(&out_dir.join("config.json"))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        cells.par_iter().for_each(|cell| {
            let dir = out_dir.join(&cell.dir);
            if dir.join("metrics.json").exists() {
                return;
            }
            if let Err(e) = run_cell(cfg, cell.n_index, cell.rep, &dir) {
                eprintln!("cell {} failed: {e}", cell.dir);
                let _ = std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join("error.txt"), e.to_string()));
            }
        });
    });
    Ok(out_dir.to_path_buf())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".to_string(),
    }
}

fn median_of(values: &mut Vec<f64>) -> Option<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(quantile(values, 0.5))
}

/// Aggregate every finished cell of a run into the summary CSV tables under
/// `<run>/report/`. Missing cells leave `NA` markers; the per-n row also
/// records how many replications were found.
pub fn report(run_dir: &Path) -> Result<PathBuf> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json"))?)?;
    // (n_index, n, p) -> loaded metrics, in manifest order
    let mut by_n: BTreeMap<(usize, usize, usize), Vec<Option<CellMetrics>>> = BTreeMap::new();
    for cell in &manifest.cells {
        let loaded = std::fs::read_to_string(run_dir.join(&cell.dir).join("metrics.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        by_n
            .entry((cell.n_index, cell.n, cell.p))
            .or_default()
            .push(loaded);
    }
    let report_dir = run_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;

    // (a) coefficient errors vs n
    let mut w = csv::Writer::from_path(report_dir.join("errors_vs_n.csv"))?;
    w.write_record([
        "n", "p", "reps_present", "reps_missing", "l1_median", "l1_q90", "l2_median", "l2_q90",
        "pred_median", "pred_q90",
    ])?;
    for (&(_, n, p), cells) in &by_n {
        let present: Vec<&CellMetrics> = cells.iter().flatten().collect();
        let missing = cells.len() - present.len();
        let agg = |f: &dyn Fn(&CellMetrics) -> f64| {
            fmt_opt(median_of(&mut present.iter().map(|c| f(c)).collect()))
        };
        w.write_record([
            n.to_string(),
            p.to_string(),
            present.len().to_string(),
            missing.to_string(),
            agg(&|c| c.errors.l1_median),
            agg(&|c| c.errors.l1_q90),
            agg(&|c| c.errors.l2_median),
            agg(&|c| c.errors.l2_q90),
            agg(&|c| c.errors.pred_median),
            agg(&|c| c.errors.pred_q90),
        ])?;
    }
    w.flush()?;

    // (b) posterior model-size distribution vs n
    let mut w = csv::Writer::from_path(report_dir.join("model_size_vs_n.csv"))?;
    w.write_record(["n", "size", "mean_mass", "reps_present"])?;
    for (&(_, n, _), cells) in &by_n {
        let present: Vec<&CellMetrics> = cells.iter().flatten().collect();
        let kmax = present.iter().map(|c| c.size_mass.len()).max().unwrap_or(0);
        for k in 0..kmax {
            let mean: f64 = present
                .iter()
                .map(|c| c.size_mass.get(k).copied().unwrap_or(0.0))
                .sum::<f64>()
                / present.len().max(1) as f64;
            w.write_record([
                n.to_string(),
                k.to_string(),
                if present.is_empty() {
                    "NA".to_string()
                } else {
                    mean.to_string()
                },
                present.len().to_string(),
            ])?;
        }
    }
    w.flush()?;

    // (c) Hellinger distance of density snapshots to the truth vs n
    let mut w = csv::Writer::from_path(report_dir.join("hellinger_vs_n.csv"))?;
    w.write_record(["n", "reps_present", "hellinger_median", "hellinger_q90"])?;
    for (&(_, n, _), cells) in &by_n {
        let present: Vec<&CellMetrics> = cells.iter().flatten().collect();
        let mut hs: Vec<f64> = present
            .iter()
            .map(|c| c.hellinger_median)
            .filter(|v| v.is_finite())
            .collect();
        hs.sort_by(f64::total_cmp);
        let (med, q90) = if hs.is_empty() {
            ("NA".to_string(), "NA".to_string())
        } else {
            (quantile(&hs, 0.5).to_string(), quantile(&hs, 0.9).to_string())
        };
        w.write_record([n.to_string(), present.len().to_string(), med, q90])?;
    }
    w.flush()?;

    // (d) selection frequencies and superset mass vs n
    let mut w = csv::Writer::from_path(report_dir.join("selection_vs_n.csv"))?;
    w.write_record([
        "n",
        "reps_present",
        "modal_true_fraction",
        "mean_exact_mass",
        "mean_superset_mass",
    ])?;
    for (&(_, n, _), cells) in &by_n {
        let present: Vec<&CellMetrics> = cells.iter().flatten().collect();
        let m = present.len();
        let (frac, exact, sup) = if m == 0 {
            ("NA".into(), "NA".into(), "NA".into())
        } else {
            (
                (present.iter().filter(|c| c.modal_is_true).count() as f64 / m as f64).to_string(),
                (present.iter().map(|c| c.exact_mass).sum::<f64>() / m as f64).to_string(),
                (present.iter().map(|c| c.superset_mass).sum::<f64>() / m as f64).to_string(),
            )
        };
        w.write_record([n.to_string(), m.to_string(), frac, exact, sup])?;
    }
    w.flush()?;

    // (e) BvM gaps and KS statistics vs n
    let mut w = csv::Writer::from_path(report_dir.join("bvm_vs_n.csv"))?;
    w.write_record([
        "n",
        "reps_present",
        "mean_gap_median",
        "cov_gap_median",
        "proj_ks_median",
        "wrong_model_mass_median",
    ])?;
    for (&(_, n, _), cells) in &by_n {
        let present: Vec<&CellMetrics> = cells.iter().flatten().collect();
        let pick = |f: &dyn Fn(&BvmReport) -> f64| {
            fmt_opt(median_of(
                &mut present.iter().filter_map(|c| c.bvm.as_ref()).map(f).collect(),
            ))
        };
        w.write_record([
            n.to_string(),
            present.len().to_string(),
            pick(&|b| b.mean_gap),
            pick(&|b| b.cov_gap),
            pick(&|b| b.proj_ks),
            pick(&|b| b.wrong_model_mass),
        ])?;
    }
    w.flush()?;

    // (f) 90% credible-interval coverage per true coordinate
    let mut w = csv::Writer::from_path(report_dir.join("coverage_vs_n.csv"))?;
    w.write_record(["n", "rank_in_support", "reps_present", "coverage"])?;
    for (&(_, n, _), cells) in &by_n {
        let present: Vec<&CellMetrics> = cells.iter().flatten().collect();
        let s0 = present.first().map(|c| c.coverage.len()).unwrap_or(0);
        for a in 0..s0 {
            let m = present.iter().filter(|c| c.coverage.len() > a).count();
            let cov = if m == 0 {
                "NA".to_string()
            } else {
                (present
                    .iter()
                    .filter_map(|c| c.coverage.get(a))
                    .filter(|r| r.covered)
                    .count() as f64
                    / m as f64)
                    .to_string()
            };
            w.write_record([n.to_string(), a.to_string(), m.to_string(), cov])?;
        }
    }
    w.flush()?;

    Ok(report_dir)
}

/// Parse coefficient draws back out of a chain CSV (inverse of
/// `ChainOutput::save_csv` for the support/theta columns).
pub fn load_coef_draws(path: &Path) -> Result<Vec<SparseCoefficient>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let support: Vec<usize> = rec
            .get(2)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parameter(format!("bad support entry '{s}': {e}")))
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = rec
            .get(3)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parameter(format!("bad theta entry '{s}': {e}")))
            })
            .collect::<Result<_>>()?;
        let p = support.iter().max().map(|m| m + 1).unwrap_or(1);
        out.push(SparseCoefficient::new(support, values, p)?);
    }
    Ok(out)
}
