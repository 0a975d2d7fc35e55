//! Trans-dimensional Gibbs sampler for the joint posterior of (S, theta_S,
//! eta). The Laplace slab is handled through its normal scale-mixture
//! representation so theta_S integrates out in closed form during support
//! moves, and the (component, sign) latents make the error likelihood
//! conditionally Gaussian.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coef_prior::{CoefPriorConfig, SparseCoefficient};
use crate::design::DesignMatrix;
use crate::dist::{
    log_normal_pdf, log_sigma_pow_ig_density, log_sum_exp, sample_inverse_gaussian,
    sample_truncated_normal, LN_2PI,
};
use crate::dpmix::{DpPriorConfig, SymmetrizedMixture};
use crate::{Error, Result};

/// Joint prior bundle.
#[derive(Clone, Debug)]
pub struct Priors {
    pub coef: CoefPriorConfig,
    pub dp: DpPriorConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplerMode {
    /// Full model: DP mixture error density updated every sweep.
    Dp,
    /// Error density frozen at N(0, sigma^2); used to validate the
    /// coefficient moves against exhaustive enumeration.
    FixedGaussian { sigma: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplerConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// A mixture snapshot is stored every `density_thin` kept samples.
    pub density_thin: usize,
    /// Random-walk step on log sigma (only used when m0 = 6).
    pub log_sigma_step: f64,
    /// Bit-flip proposals per sweep touch all p coordinates when
    /// p <= max_flip_coords, else a random subset of that size plus the
    /// current support.
    pub max_flip_coords: usize,
    pub mode: SamplerMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sweeps: 2500,
            burn_in: 500,
            thin: 1,
            density_thin: 10,
            log_sigma_step: 0.3,
            max_flip_coords: 200,
            mode: SamplerMode::Dp,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps <= self.burn_in {
            return Err(Error::Config("sweeps must exceed burn_in".into()));
        }
        if self.thin == 0 || self.density_thin == 0 {
            return Err(Error::Config("thin levels must be >= 1".into()));
        }
        if self.log_sigma_step <= 0.0 || self.max_flip_coords == 0 {
            return Err(Error::Config("positive step and flip budget required".into()));
        }
        if let SamplerMode::FixedGaussian { sigma } = self.mode {
            if sigma <= 0.0 {
                return Err(Error::Config("fixed-gaussian sigma must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Full latent state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub coef: SparseCoefficient,
    /// Slab scale-mixture variances, aligned with coef.support.
    pub lasso_scales: Vec<f64>,
    /// Mixture component per observation.
    pub alloc: Vec<usize>,
    /// Symmetrization sign per observation.
    pub sign: Vec<i8>,
    pub mix: SymmetrizedMixture,
    pub rng: ChaCha12Rng,
}

/// One stored draw.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrawRecord {
    pub sweep: usize,
    pub coef: SparseCoefficient,
    pub sigma: f64,
    /// Log-likelihood under the current mixture plus the coefficient
    /// log-prior (mixture prior terms omitted: a trace, not a normalizer).
    pub log_post: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<DrawRecord>,
    /// Thinned full-mixture snapshots for density diagnostics.
    pub density_draws: Vec<SymmetrizedMixture>,
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub sigma_accept_rate: f64,
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub flip_accept_rate: f64,
    /// Number of Cholesky ridge repairs during model moves.
    pub ridge_events: usize,
    pub config: SamplerConfig,
}

impl ChainOutput {
    pub fn coef_draws(&self) -> Vec<SparseCoefficient> {
        self.samples.iter().map(|r| r.coef.clone()).collect()
    }

    /// Empirical posterior over supports.
    pub fn model_posterior(&self) -> HashMap<Vec<usize>, f64> {
        let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
        let w = 1.0 / self.samples.len() as f64;
        for r in &self.samples {
            *out.entry(r.coef.support.clone()).or_insert(0.0) += w;
        }
        out
    }

    /// Columnar CSV: sweep, |S|, support and theta semicolon-packed, sigma,
    /// log_post.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sweep", "s", "support", "theta", "sigma", "log_post"])?;
        for r in &self.samples {
            let support = r
                .coef
                .support
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let theta = r
                .coef
                .values
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.sweep.to_string(),
                r.coef.len().to_string(),
                support,
                theta,
                format!("{:.17e}", r.sigma),
                format!("{:.17e}", r.log_post),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar: acceptance rates, events, config echo.
    pub fn save_sidecar(&self, path: &Path) -> Result<()> {
        let side = serde_json::json!({
            "sigma_accept_rate": self.sigma_accept_rate,
            "flip_accept_rate": self.flip_accept_rate,
            "ridge_events": self.ridge_events,
            "config": self.config,
            "samples": self.samples.len(),
            "density_draws": self.density_draws.len(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

#[derive(Default)]
struct Tally {
    sigma_prop: usize,
    sigma_acc: usize,
    flip_prop: usize,
    flip_acc: usize,
    ridge: usize,
}

/// Immutable sweep context.
struct Gibbs<'a> {
    x: &'a DesignMatrix,
    y: &'a DVector<f64>,
    priors: &'a Priors,
    config: &'a SamplerConfig,
}

fn sign_of(v: f64) -> i8 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

/// Draw omega_j | theta_j: 1/omega ~ InverseGaussian(lambda/|theta|, lambda^2).
pub fn draw_lasso_scale<R: Rng>(theta_j: f64, lambda: f64, rng: &mut R) -> f64 {
    if theta_j == 0.0 {
        return draw_lasso_scale_prior(lambda, rng);
    }
    let inv = sample_inverse_gaussian(rng, lambda / theta_j.abs(), lambda * lambda);
    (1.0 / inv).max(1e-300)
}

/// omega ~ Exp(lambda^2 / 2), the mixing law that makes theta Laplace(lambda).
pub fn draw_lasso_scale_prior<R: Rng>(lambda: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen::<f64>().max(1e-300);
    (-u.ln() * 2.0 / (lambda * lambda)).max(1e-300)
}

pub fn init(
    x: &DesignMatrix,
    y: &DVector<f64>,
    priors: &Priors,
    config: &SamplerConfig,
    rng: ChaCha12Rng,
) -> Result<ChainState> {
    config.validate()?;
    let n = x.n();
    if n < 2 {
        return Err(Error::Parameter("sampler needs n >= 2".into()));
    }
    if y.len() != n {
        return Err(Error::Parameter("y length must match design rows".into()));
    }
    let mut rng = rng;

    // top-1 marginal correlation coordinate, least squares on it
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for j in 0..x.p() {
        let col = x.entries().column(j);
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let score = (col.dot(y) / norm).abs();
        if score > best_score {
            best_score = score;
            best = j;
        }
    }
    let col = x.entries().column(best);
    let denom = col.dot(&col);
    let ls = if denom > 0.0 { col.dot(y) / denom } else { 0.0 };
    let coef = if ls == 0.0 {
        SparseCoefficient::empty()
    } else {
        SparseCoefficient::new(vec![best], vec![ls], x.p())?
    };
    let lasso_scales: Vec<f64> = coef
        .values
        .iter()
        .map(|_| draw_lasso_scale_prior(priors.coef.lambda, &mut rng))
        .collect();

    let resid = y - x.predict(&coef.support, &coef.values);
    let sign: Vec<i8> = resid.iter().map(|&r| sign_of(r)).collect();
    let alloc = vec![0usize; n];

    let mix = match config.mode {
        SamplerMode::FixedGaussian { sigma } => {
            SymmetrizedMixture::new(vec![1.0], vec![0.0], sigma)?
        }
        SamplerMode::Dp => {
            let dp = &priors.dp;
            let sd = (resid.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
            let sigma = sd.clamp(1e-3, if dp.sigma_max.is_finite() { dp.sigma_max } else { f64::MAX });
            let mut atoms = Vec::with_capacity(dp.h);
            for _ in 0..dp.h {
                atoms.push(sample_truncated_normal(
                    &mut rng,
                    0.0,
                    dp.base_scale,
                    -dp.half_width,
                    dp.half_width,
                )?);
            }
            let weights = crate::dpmix::stick_breaking(dp.alpha_mass, dp.h, &mut rng)?;
            SymmetrizedMixture::new(weights, atoms, sigma)?
        }
    };

    Ok(ChainState {
        coef,
        lasso_scales,
        alloc,
        sign,
        mix,
        rng,
    })
}

impl Gibbs<'_> {
    fn residuals(&self, state: &ChainState) -> DVector<f64> {
        self.y - self.x.predict(&state.coef.support, &state.coef.values)
    }

    /// Pseudo-data: Y_i - t_i z_{c_i}; conditionally Ytilde = X theta + N(0, sigma^2).
    fn pseudo_data(&self, state: &ChainState) -> DVector<f64> {
        DVector::from_fn(self.x.n(), |i, _| {
            self.y[i] - state.sign[i] as f64 * state.mix.atoms[state.alloc[i]]
        })
    }

    /// Joint exact Gibbs draw of (c_i, t_i) from the 2H-way categorical.
    fn update_signs_allocs(&self, state: &mut ChainState) {
        let eps = self.residuals(state);
        let h = state.mix.atoms.len();
        let sigma = state.mix.sigma;
        let mut logs = vec![0.0f64; 2 * h];
        for i in 0..self.x.n() {
            for k in 0..h {
                let lw = if state.mix.weights[k] > 0.0 {
                    state.mix.weights[k].ln()
                } else {
                    f64::NEG_INFINITY
                };
                let z = state.mix.atoms[k];
                logs[2 * k] = lw + log_normal_pdf(eps[i], z, sigma);
                logs[2 * k + 1] = lw + log_normal_pdf(eps[i], -z, sigma);
            }
            let total = log_sum_exp(&logs);
            let u: f64 = state.rng.gen();
            let mut acc = 0.0;
            let mut pick = 2 * h - 1;
            for (idx, &l) in logs.iter().enumerate() {
                acc += (l - total).exp();
                if u <= acc {
                    pick = idx;
                    break;
                }
            }
            state.alloc[i] = pick / 2;
            state.sign[i] = if pick.is_multiple_of(2) { 1 } else { -1 };
        }
    }

    /// z_h | rest: normal from {t_i eps_i : c_i = h} against the truncated
    /// base, truncated to the atom support. Empty components refresh from
    /// the base.
    fn update_atoms(&self, state: &mut ChainState) -> Result<()> {
        let eps = self.residuals(state);
        let dp = &self.priors.dp;
        let h = state.mix.atoms.len();
        let mut count = vec![0usize; h];
        let mut sum = vec![0.0f64; h];
        for i in 0..self.x.n() {
            let k = state.alloc[i];
            count[k] += 1;
            sum[k] += state.sign[i] as f64 * eps[i];
        }
        let s2 = state.mix.sigma * state.mix.sigma;
        let base_prec = 1.0 / (dp.base_scale * dp.base_scale);
        for k in 0..h {
            let (mean, sd) = if count[k] == 0 {
                (0.0, dp.base_scale)
            } else {
                let prec = count[k] as f64 / s2 + base_prec;
                ((sum[k] / s2) / prec, prec.sqrt().recip())
            };
            state.mix.atoms[k] = sample_truncated_normal(
                &mut state.rng,
                mean,
                sd,
                -dp.half_width,
                dp.half_width,
            )?;
        }
        Ok(())
    }

    /// Stick posteriors Beta(1 + n_h, alpha + n_{>h}); last stick absorbs.
    fn update_sticks(&self, state: &mut ChainState) -> Result<()> {
        let dp = &self.priors.dp;
        let h = state.mix.atoms.len();
        let mut count = vec![0usize; h];
        for &k in &state.alloc {
            count[k] += 1;
        }
        let mut tail: Vec<usize> = vec![0; h + 1];
        for k in (0..h).rev() {
            tail[k] = tail[k + 1] + count[k];
        }
        let mut remaining = 1.0;
        for k in 0..h {
            if k + 1 == h {
                state.mix.weights[k] = remaining;
            } else {
                let beta = rand_distr::Beta::new(
                    1.0 + count[k] as f64,
                    dp.alpha_mass + tail[k + 1] as f64,
                )
                .map_err(|e| Error::Numeric(format!("stick posterior: {e}")))?;
                let v: f64 = beta.sample(&mut state.rng);
                state.mix.weights[k] = v * remaining;
                remaining *= 1.0 - v;
            }
        }
        Ok(())
    }

    fn update_sigma(&self, state: &mut ChainState, tally: &mut Tally) -> Result<()> {
        let dp = &self.priors.dp;
        let eps = self.residuals(state);
        let n = self.x.n();
        let ss: f64 = (0..n)
            .map(|i| {
                let d = eps[i] - state.sign[i] as f64 * state.mix.atoms[state.alloc[i]];
                d * d
            })
            .sum();
        if dp.m0 == 2 {
            // conjugate: sigma^2 | rest ~ IG(a0 + n/2, b0 + ss/2)
            let shape = dp.a0 + n as f64 / 2.0;
            let rate = dp.b0 + ss / 2.0;
            let g = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| Error::Numeric(format!("sigma gamma: {e}")))?;
            for _ in 0..1000 {
                let draw = (1.0 / g.sample(&mut state.rng).max(1e-300)).sqrt();
                if draw <= dp.sigma_max {
                    state.mix.sigma = draw;
                    return Ok(());
                }
            }
            // support truncation starves the conjugate draw; keep current
            return Ok(());
        }
        // m0 = 6: random-walk MH on log sigma with Jacobian
        tally.sigma_prop += 1;
        let cur = state.mix.sigma;
        let log_target = |s: f64| -> f64 {
            if s <= 0.0 || s > dp.sigma_max {
                return f64::NEG_INFINITY;
            }
            let loglik = -(n as f64) * (s.ln() + 0.5 * LN_2PI) - ss / (2.0 * s * s);
            loglik + log_sigma_pow_ig_density(s, dp.m0 as f64, dp.a0, dp.b0) + s.ln()
        };
        let step: f64 = state.rng.sample(StandardNormal);
        let prop = (cur.ln() + self.config.log_sigma_step * step).exp();
        let log_ratio = log_target(prop) - log_target(cur);
        if log_ratio >= 0.0 || state.rng.gen::<f64>().ln() < log_ratio {
            state.mix.sigma = prop;
            tally.sigma_acc += 1;
        }
        Ok(())
    }

    fn update_lasso_scales(&self, state: &mut ChainState) {
        let lambda = self.priors.coef.lambda;
        for (w, &theta) in state.lasso_scales.iter_mut().zip(&state.coef.values) {
            *w = draw_lasso_scale(theta, lambda, &mut state.rng);
        }
    }

    /// A = X_S'X_S/sigma^2 + diag(1/omega), b = X_S' ytilde / sigma^2.
    fn model_matrices(
        &self,
        support: &[usize],
        scales: &[f64],
        xty: &DVector<f64>,
        sigma: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let k = support.len();
        let s2 = sigma * sigma;
        let n = self.x.n() as f64;
        let mut a = self.x.gram_sub(support) * (n / s2);
        for j in 0..k {
            a[(j, j)] += 1.0 / scales[j];
        }
        let b = DVector::from_fn(k, |j, _| xty[support[j]] / s2);
        (a, b)
    }

    /// log of int N(ytilde; X_S theta, sigma^2 I) N(theta; 0, diag omega) dtheta,
    /// dropping terms constant in S (the -(n/2)log(2 pi sigma^2) - |y|^2/2sigma^2
    /// part cancels in every flip ratio).
    fn log_marginal(
        &self,
        support: &[usize],
        scales: &[f64],
        xty: &DVector<f64>,
        sigma: f64,
        tally: &mut Tally,
    ) -> f64 {
        if support.is_empty() {
            return 0.0;
        }
        let (mut a, b) = self.model_matrices(support, scales, xty, sigma);
        let chol = match Cholesky::new(a.clone()) {
            Some(c) => c,
            None => {
                tally.ridge += 1;
                for j in 0..support.len() {
                    a[(j, j)] += 1e-10;
                }
                Cholesky::new(a).expect("ridge-repaired Gram must factor")
            }
        };
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = b.dot(&chol.solve(&b));
        -0.5 * scales.iter().map(|w| w.ln()).sum::<f64>() - 0.5 * logdet + 0.5 * quad
    }

    /// Bit-flip Gibbs over supports with theta marginalized, then an exact
    /// multivariate-normal redraw of theta_S.
    fn update_model(&self, state: &mut ChainState, tally: &mut Tally) -> Result<()> {
        let p = self.x.p();
        let n = self.x.n();
        let prior = &self.priors.coef;
        let sigma = state.mix.sigma;
        let ytilde = self.pseudo_data(state);
        let xty = self.x.entries().transpose() * &ytilde;
        let cap = p.min(n / 2);

        let mut coords: Vec<usize> = if p <= self.config.max_flip_coords {
            (0..p).collect()
        } else {
            let mut set: Vec<usize> =
                rand::seq::index::sample(&mut state.rng, p, self.config.max_flip_coords)
                    .into_vec();
            set.extend_from_slice(&state.coef.support);
            set.sort_unstable();
            set.dedup();
            set
        };
        coords.shuffle(&mut state.rng);

        let mut support = state.coef.support.clone();
        let mut scales = state.lasso_scales.clone();
        let mut cur_lm = self.log_marginal(&support, &scales, &xty, sigma, tally);

        for j in coords {
            match support.binary_search(&j) {
                Ok(pos) => {
                    // propose dropping j
                    tally.flip_prop += 1;
                    let mut sub_support = support.clone();
                    let mut sub_scales = scales.clone();
                    sub_support.remove(pos);
                    let w_j = sub_scales.remove(pos);
                    let sub_lm = self.log_marginal(&sub_support, &sub_scales, &xty, sigma, tally);
                    let s = support.len();
                    let log_odds_keep = (cur_lm + prior.log_model_weight(s))
                        - (sub_lm + prior.log_model_weight(s - 1));
                    if !keep(log_odds_keep, &mut state.rng) {
                        support = sub_support;
                        scales = sub_scales;
                        cur_lm = sub_lm;
                        tally.flip_acc += 1;
                    }
                    let _ = w_j;
                }
                Err(pos) => {
                    if support.len() >= cap {
                        continue;
                    }
                    tally.flip_prop += 1;
                    let w_j = draw_lasso_scale_prior(prior.lambda, &mut state.rng);
                    let mut add_support = support.clone();
                    let mut add_scales = scales.clone();
                    add_support.insert(pos, j);
                    add_scales.insert(pos, w_j);
                    let add_lm = self.log_marginal(&add_support, &add_scales, &xty, sigma, tally);
                    let s = support.len();
                    let log_odds_add = (add_lm + prior.log_model_weight(s + 1))
                        - (cur_lm + prior.log_model_weight(s));
                    if keep(log_odds_add, &mut state.rng) {
                        support = add_support;
                        scales = add_scales;
                        cur_lm = add_lm;
                        tally.flip_acc += 1;
                    }
                }
            }
        }

        // exact normal redraw of theta_S: N(A^{-1} b, A^{-1})
        if support.is_empty() {
            state.coef = SparseCoefficient::empty();
            state.lasso_scales.clear();
            return Ok(());
        }
        let (mut a, b) = self.model_matrices(&support, &scales, &xty, sigma);
        let chol = match Cholesky::new(a.clone()) {
            Some(c) => c,
            None => {
                tally.ridge += 1;
                for j in 0..support.len() {
                    a[(j, j)] += 1e-10;
                }
                Cholesky::new(a).expect("ridge-repaired Gram must factor")
            }
        };
        let mean = chol.solve(&b);
        let z = DVector::from_fn(support.len(), |_, _| state.rng.sample(StandardNormal));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numeric("triangular solve failed in theta redraw".into()))?;
        let values: Vec<f64> = (&mean + noise)
            .iter()
            .map(|&v| if v == 0.0 { f64::MIN_POSITIVE } else { v })
            .collect();
        state.coef = SparseCoefficient::new(support, values, p)?;
        state.lasso_scales = scales;
        Ok(())
    }

    fn log_post(&self, state: &ChainState) -> f64 {
        let eps = self.residuals(state);
        let loglik = state.mix.log_lik(eps.as_slice());
        loglik + self.priors.coef.log_prior(&state.coef).unwrap_or(f64::NEG_INFINITY)
    }

    fn sweep(&self, state: &mut ChainState, tally: &mut Tally) -> Result<()> {
        if matches!(self.config.mode, SamplerMode::Dp) {
            self.update_signs_allocs(state);
            self.update_atoms(state)?;
            self.update_sticks(state)?;
            self.update_sigma(state, tally)?;
        }
        self.update_lasso_scales(state);
        self.update_model(state, tally)?;
        Ok(())
    }
}

#[inline]
fn keep<R: Rng>(log_odds: f64, rng: &mut R) -> bool {
    // two-point conditional: P = sigmoid(log_odds)
    let p = if log_odds > 40.0 {
        1.0
    } else if log_odds < -40.0 {
        0.0
    } else {
        1.0 / (1.0 + (-log_odds).exp())
    };
    rng.gen::<f64>() < p
}

pub fn run_chain(
    x: &DesignMatrix,
    y: &DVector<f64>,
    priors: &Priors,
    config: &SamplerConfig,
    rng: ChaCha12Rng,
) -> Result<ChainOutput> {
    let mut state = init(x, y, priors, config, rng)?;
    run_chain_from(x, y, priors, config, &mut state)
}

/// Run sweeps from an existing state (used by the validity tests, which
/// need transitions started at exact prior draws).
pub fn run_chain_from(
    x: &DesignMatrix,
    y: &DVector<f64>,
    priors: &Priors,
    config: &SamplerConfig,
    state: &mut ChainState,
) -> Result<ChainOutput> {
    config.validate()?;
    let gibbs = Gibbs {
        x,
        y,
        priors,
        config,
    };
    let mut tally = Tally::default();
    let mut samples = Vec::new();
    let mut density_draws = Vec::new();
    let mut kept = 0usize;
    for sweep in 0..config.sweeps {
        gibbs.sweep(state, &mut tally)?;
        if sweep >= config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            samples.push(DrawRecord {
                sweep,
                coef: state.coef.clone(),
                sigma: state.mix.sigma,
                log_post: gibbs.log_post(state),
            });
            if kept.is_multiple_of(config.density_thin) {
                density_draws.push(state.mix.clone());
            }
            kept += 1;
        }
    }
    Ok(ChainOutput {
        samples,
        density_draws,
        sigma_accept_rate: if tally.sigma_prop == 0 {
            f64::NAN
        } else {
            tally.sigma_acc as f64 / tally.sigma_prop as f64
        },
        flip_accept_rate: if tally.flip_prop == 0 {
            f64::NAN
        } else {
            tally.flip_acc as f64 / tally.flip_prop as f64
        },
        ridge_events: tally.ridge,
        config: config.clone(),
    })
}

/// Convenience: run with a u64 seed.
pub fn run_chain_seeded(
    x: &DesignMatrix,
    y: &DVector<f64>,
    priors: &Priors,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ChainOutput> {
    run_chain(x, y, priors, config, ChaCha12Rng::seed_from_u64(seed))
}
