//! Spike-and-slab prior on (S, theta): a complexity prior on the model
//! dimension, the uniform prior on supports of a given size, and the
//! Laplace slab `g_S(theta_S) = (lambda/2)^{|S|} exp(-lambda ||theta_S||_1)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Dimension-prior form.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PiForm {
    /// pi_p(s) proportional to p^{-a4 s}; successive ratio exactly p^{-a4}.
    Complexity { a4: f64 },
    /// Explicit unnormalized table over s = 0..=p.
    Table { weights: Vec<f64> },
}

/// Coefficient-prior configuration with the normalized dimension prior
/// cached as log-probabilities.
#[derive(Clone, Debug)]
pub struct CoefPriorConfig {
    pub p: usize,
    pub n: usize,
    pub lambda: f64,
    pi_form: PiForm,
    log_pi: Vec<f64>,
}

/// Serializable config block: `{A4, lambda: "small"|"large"|number}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoefPriorBlock {
    #[serde(rename = "A4")]
    pub a4: f64,
    pub lambda: LambdaChoice,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged, rename_all = "snake_case")]
pub enum LambdaChoice {
    Named(LambdaRegime),
    Value(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRegime {
    Small,
    Large,
}

impl CoefPriorBlock {
    pub fn build(&self, n: usize, p: usize) -> Result<CoefPriorConfig> {
        let lambda = match &self.lambda {
            LambdaChoice::Named(r) => default_lambda(n, p, *r),
            LambdaChoice::Value(v) => *v,
        };
        CoefPriorConfig::new(n, p, PiForm::Complexity { a4: self.a4 }, lambda)
    }
}

/// A sparse coefficient vector as (sorted support, nonzero values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficient {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCoefficient {
    pub fn new(support: Vec<usize>, values: Vec<f64>, p: usize) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Parameter("support/values length mismatch".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("support must be sorted and unique".into()));
        }
        if support.iter().any(|&j| j >= p) {
            return Err(Error::Parameter("support index out of range".into()));
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::Parameter("values must be nonzero and finite".into()));
        }
        Ok(Self { support, values })
    }

    pub fn empty() -> Self {
        Self {
            support: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Dense p-vector.
    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (&j, &v) in self.support.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

/// ln C(n, k).
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// The paper's lambda range endpoints: sqrt(n)/p and sqrt(n log p).
pub fn default_lambda(n: usize, p: usize, regime: LambdaRegime) -> f64 {
    match regime {
        LambdaRegime::Small => (n as f64).sqrt() / p as f64,
        LambdaRegime::Large => (n as f64 * (p as f64).ln()).sqrt(),
    }
}

impl CoefPriorConfig {
    pub fn new(n: usize, p: usize, pi_form: PiForm, lambda: f64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Parameter("n and p must be positive".into()));
        }
        if lambda <= 0.0 {
            return Err(Error::Parameter("lambda must be positive".into()));
        }
        if p >= 2 {
            let lo = default_lambda(n, p, LambdaRegime::Small);
            let hi = default_lambda(n, p, LambdaRegime::Large);
            if lambda < lo * (1.0 - 1e-9) || lambda > hi * (1.0 + 1e-9) {
                return Err(Error::Parameter(format!(
                    "lambda {lambda} outside the admissible range [{lo}, {hi}]"
                )));
            }
        }
        let log_pi = match &pi_form {
            PiForm::Complexity { a4 } => {
                if *a4 <= 0.0 {
                    return Err(Error::Parameter("A4 must be positive".into()));
                }
                let lw: Vec<f64> = (0..=p).map(|s| -a4 * s as f64 * (p as f64).ln()).collect();
                normalize_log(lw)
            }
            PiForm::Table { weights } => {
                if weights.len() != p + 1 || weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::Parameter(
                        "table prior needs p+1 nonnegative weights".into(),
                    ));
                }
                normalize_log(weights.iter().map(|w| w.ln()).collect())
            }
        };
        Ok(Self {
            p,
            n,
            lambda,
            pi_form,
            log_pi,
        })
    }

    pub fn pi_form(&self) -> &PiForm {
        &self.pi_form
    }

    /// log pi_p(s), normalized over s = 0..=p.
    pub fn log_pi(&self, s: usize) -> f64 {
        self.log_pi[s]
    }

    /// log of the model weight pi_p(|S|) / C(p, |S|).
    pub fn log_model_weight(&self, s: usize) -> f64 {
        self.log_pi[s] - ln_choose(self.p, s)
    }

    /// Full log prior density of (S, theta_S) against counting x Lebesgue.
    pub fn log_prior(&self, coef: &SparseCoefficient) -> Result<f64> {
        let s = coef.len();
        if s > self.p {
            return Err(Error::Parameter(format!(
                "support size {s} exceeds p = {}",
                self.p
            )));
        }
        Ok(self.log_model_weight(s) + s as f64 * (self.lambda / 2.0).ln()
            - self.lambda * coef.l1_norm())
    }
}

/// Draw (S, theta_S) from the prior: dimension from pi_p, support uniform
/// among size-s subsets, values i.i.d. Laplace(lambda).
pub fn sample_prior_coef<R: rand::Rng>(
    cfg: &CoefPriorConfig,
    rng: &mut R,
) -> Result<SparseCoefficient> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut s = 0;
    for k in 0..=cfg.p {
        acc += cfg.log_pi(k).exp();
        if u <= acc {
            s = k;
            break;
        }
    }
    if s == 0 {
        return Ok(SparseCoefficient::empty());
    }
    let mut support: Vec<usize> = rand::seq::index::sample(rng, cfg.p, s).into_vec();
    support.sort_unstable();
    let values: Vec<f64> = (0..s)
        .map(|_| {
            let mag = -rng.gen::<f64>().max(1e-300).ln() / cfg.lambda;
            let mag = mag.max(1e-300);
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    SparseCoefficient::new(support, values, cfg.p)
}

fn normalize_log(mut lw: Vec<f64>) -> Vec<f64> {
    let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = m + lw.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    for x in &mut lw {
        *x -= z;
    }
    lw
}
