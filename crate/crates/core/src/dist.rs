//! Small distribution helpers shared by the prior and the sampler.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

pub const LN_2PI: f64 = 1.837877066409345483560659472811;

/// log of the N(mu, sigma^2) density at y.
#[inline]
pub fn log_normal_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * LN_2PI
}

#[inline]
pub fn normal_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    log_normal_pdf(y, mu, sigma).exp()
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm_erfc(-z / std::f64::consts::SQRT_2)
}

// erfc via statrs-backed normal; kept as a thin wrapper so call sites stay
// readable.
fn libm_erfc(x: f64) -> f64 {
    // statrs Normal(0,1) cdf(z) = 0.5 erfc(-z/sqrt 2); invert the identity.
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * n.cdf(-x * std::f64::consts::SQRT_2)
}

/// log of the standard normal CDF, accurate far into the lower tail.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z > -16.0 {
        return std_normal_cdf(z).ln();
    }
    // Mills-ratio asymptotic: Phi(z) = phi(z)/(-z) (1 - 1/z^2 + 3/z^4 - ...)
    let z2 = z * z;
    let z4 = z2 * z2;
    let series = 1.0 - 1.0 / z2 + 3.0 / z4 - 15.0 / (z2 * z4) + 105.0 / (z4 * z4)
        - 945.0 / (z2 * z4 * z4) + 10395.0 / (z4 * z4 * z4);
    -0.5 * z2 - (-z).ln() - 0.5 * LN_2PI + series.ln()
}

/// Standard normal quantile.
#[inline]
pub fn std_normal_quantile(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(p)
}

/// Draw from N(mu, sd^2) truncated to [lo, hi] by inverse-CDF.
pub fn sample_truncated_normal<R: Rng>(
    rng: &mut R,
    mu: f64,
    sd: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    // negated so NaN bounds also land in the error arm
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lo < hi) || sd <= 0.0 {
        return Err(Error::Parameter(format!(
            "truncated normal needs lo < hi and sd > 0, got [{lo}, {hi}], sd {sd}"
        )));
    }
    let a = std_normal_cdf((lo - mu) / sd);
    let b = std_normal_cdf((hi - mu) / sd);
    if b - a < 1e-300 {
        // Interval carries essentially no mass; clamp to the nearer edge.
        return Ok(if mu < lo { lo } else { hi });
    }
    let u: f64 = rng.gen_range(a..b);
    let z = std_normal_quantile(u);
    Ok((mu + sd * z).clamp(lo, hi))
}

/// Inverse-Gaussian(mean mu, shape lambda) draw (Michael–Schucany–Haas).
pub fn sample_inverse_gaussian<R: Rng>(rng: &mut R, mu: f64, lambda: f64) -> f64 {
    debug_assert!(mu > 0.0 && lambda > 0.0);
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let x = mu + mu * mu * y / (2.0 * lambda)
        - (mu / (2.0 * lambda)) * (4.0 * mu * lambda * y + mu * mu * y * y).sqrt();
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        x.max(1e-300)
    } else {
        (mu * mu / x).max(1e-300)
    }
}

/// Draw sigma with sigma^m0 ~ InverseGamma(a0, b0).
pub fn sample_sigma_pow_inverse_gamma<R: Rng>(rng: &mut R, m0: f64, a0: f64, b0: f64) -> f64 {
    // X ~ Gamma(a0, rate b0)  =>  1/X ~ IG(a0, b0).
    let g = Gamma::new(a0, 1.0 / b0).expect("gamma params");
    let x = g.sample(rng).max(1e-300);
    (1.0 / x).powf(1.0 / m0)
}

/// log density of sigma when sigma^m0 ~ IG(a0, b0), up to the normalizer.
#[inline]
pub fn log_sigma_pow_ig_density(sigma: f64, m0: f64, a0: f64, b0: f64) -> f64 {
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    // p(sigma) = p_IG(sigma^m0) * m0 sigma^{m0-1}
    //          ∝ sigma^{-m0 a0 - 1} exp(-b0 sigma^{-m0})
    -(m0 * a0 + 1.0) * sigma.ln() - b0 * sigma.powf(-m0)
}

/// Numerically stable log(sum(exp(v))).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
