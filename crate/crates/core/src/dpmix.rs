//! Symmetrized Dirichlet-process Gaussian location mixture prior for the
//! error density: truncated stick-breaking weights, truncated-normal atom
//! base, and a prior on sigma through sigma^{m0} ~ IG(a0, b0). Every draw
//! is evaluated through the symmetrization `(F + F^-)/2`, so the density is
//! even by construction.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dist::{
    log_normal_pdf, log_sum_exp, sample_sigma_pow_inverse_gamma, sample_truncated_normal,
};
use crate::{Error, Result, ScoredDensity};

/// Cap on rejection attempts when the sigma prior is support-truncated.
const SIGMA_REJECTION_CAP: usize = 100_000;

/// Atom-support / sigma-support regime.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TruncMode {
    /// Atom half-width C' n, sigma unrestricted (rate-experiment regime).
    Rate,
    /// Atom half-width C' (log n)^{2/tau}, sigma in (0, C' log n]
    /// (the narrower supports the BvM and selection results assume).
    Bvm { tau: f64 },
}

/// Serializable prior block: `{alpha_mass, base_scale, trunc_mode, Cprime, m0, a0, b0, H}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DpPriorBlock {
    pub alpha_mass: f64,
    pub base_scale: f64,
    pub trunc_mode: TruncMode,
    #[serde(rename = "Cprime")]
    pub cprime: f64,
    pub m0: u32,
    pub a0: f64,
    pub b0: f64,
    #[serde(rename = "H")]
    pub h: usize,
}

impl Default for DpPriorBlock {
    fn default() -> Self {
        Self {
            alpha_mass: 1.0,
            base_scale: 1.0,
            trunc_mode: TruncMode::Rate,
            cprime: 1.0,
            m0: 2,
            a0: 2.0,
            b0: 2.0,
            h: 50,
        }
    }
}

impl DpPriorBlock {
    pub fn build(&self, n: usize) -> Result<DpPriorConfig> {
        DpPriorConfig::new(n, self.clone())
    }
}

/// Resolved prior configuration for a given sample size n.
#[derive(Clone, Debug)]
pub struct DpPriorConfig {
    pub alpha_mass: f64,
    pub base_scale: f64,
    /// Atom truncation half-width W.
    pub half_width: f64,
    pub m0: u32,
    pub a0: f64,
    pub b0: f64,
    /// Stick-breaking truncation level.
    pub h: usize,
    /// Upper end of the sigma support; infinite in rate mode.
    pub sigma_max: f64,
}

impl DpPriorConfig {
    pub fn new(n: usize, block: DpPriorBlock) -> Result<Self> {
        if block.alpha_mass <= 0.0
            || block.base_scale <= 0.0
            || block.cprime <= 0.0
            || block.a0 <= 0.0
            || block.b0 <= 0.0
        {
            return Err(Error::Config("dpmix: all scale parameters must be > 0".into()));
        }
        if block.h < 1 {
            return Err(Error::Config("dpmix: truncation level H must be >= 1".into()));
        }
        if block.m0 != 2 && block.m0 != 6 {
            return Err(Error::Config("dpmix: m0 must be 2 or 6".into()));
        }
        if n < 2 {
            return Err(Error::Config("dpmix: needs n >= 2".into()));
        }
        let (half_width, sigma_max) = match block.trunc_mode {
            TruncMode::Rate => (block.cprime * n as f64, f64::INFINITY),
            TruncMode::Bvm { tau } => {
                if tau <= 0.0 {
                    return Err(Error::Config("dpmix: bvm mode needs tau > 0".into()));
                }
                let ln_n = (n as f64).ln();
                (block.cprime * ln_n.powf(2.0 / tau), block.cprime * ln_n)
            }
        };
        Ok(Self {
            alpha_mass: block.alpha_mass,
            base_scale: block.base_scale,
            half_width,
            m0: block.m0,
            a0: block.a0,
            b0: block.b0,
            h: block.h,
            sigma_max,
        })
    }

    /// Draw sigma from the configured prior, rejecting outside the support.
    pub fn sample_sigma<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        for _ in 0..SIGMA_REJECTION_CAP {
            let s = sample_sigma_pow_inverse_gamma(rng, self.m0 as f64, self.a0, self.b0);
            if s <= self.sigma_max {
                return Ok(s);
            }
        }
        Err(Error::Config(
            "sigma prior rejection loop exhausted: degenerate support truncation".into(),
        ))
    }
}

/// A truncated stick-breaking draw evaluated through the symmetrizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetrizedMixture {
    pub weights: Vec<f64>,
    pub atoms: Vec<f64>,
    pub sigma: f64,
}

impl SymmetrizedMixture {
    pub fn new(weights: Vec<f64>, atoms: Vec<f64>, sigma: f64) -> Result<Self> {
        if weights.len() != atoms.len() || weights.is_empty() {
            return Err(Error::Parameter(
                "mixture weights/atoms must be nonempty and equal length".into(),
            ));
        }
        // negated so NaN weights also land in the error arm
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if sigma <= 0.0 || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Parameter("mixture needs sigma > 0, weights >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            weights,
            atoms,
            sigma,
        })
    }

    /// eta(y) = sum_h w_h [phi_sigma(y - z_h) + phi_sigma(y + z_h)] / 2.
    pub fn eval(&self, y: f64) -> f64 {
        self.log_eval(y).exp()
    }

    pub fn log_eval(&self, y: f64) -> f64 {
        // evaluate at |y|: the symmetrized density is even, and doing it
        // algebraically makes eta(y) == eta(-y) bit-exact
        let y = y.abs();
        let mut terms = Vec::with_capacity(2 * self.weights.len());
        for (&w, &z) in self.weights.iter().zip(&self.atoms) {
            if w <= 0.0 {
                continue;
            }
            let lw = (0.5 * w).ln();
            terms.push(lw + log_normal_pdf(y, z, self.sigma));
            terms.push(lw + log_normal_pdf(y, -z, self.sigma));
        }
        log_sum_exp(&terms)
    }

    /// Log-likelihood of a residual vector, log-sum-exp stabilized per point.
    pub fn log_lik(&self, residuals: &[f64]) -> f64 {
        residuals.iter().map(|&r| self.log_eval(r)).sum()
    }

    /// eta'(y)/eta(y); the mixture is C^infinity so this is exact.
    pub fn score_at(&self, y: f64) -> f64 {
        let sign = if y < 0.0 { -1.0 } else { 1.0 };
        let y = y.abs();
        let inv_s2 = 1.0 / (self.sigma * self.sigma);
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (&w, &z) in self.weights.iter().zip(&self.atoms) {
            for zz in [z, -z] {
                let phi = log_normal_pdf(y, zz, self.sigma).exp();
                d0 += 0.5 * w * phi;
                d1 += 0.5 * w * (-(y - zz) * inv_s2) * phi;
            }
        }
        sign * d1 / d0
    }
}

impl ScoredDensity for SymmetrizedMixture {
    fn density(&self, y: f64) -> f64 {
        self.eval(y)
    }
    fn log_density(&self, y: f64) -> f64 {
        self.log_eval(y)
    }
    fn score(&self, y: f64) -> f64 {
        self.score_at(y)
    }
}

/// Truncated stick-breaking weights from Beta(1, alpha_mass) sticks; the
/// final stick absorbs the remainder so the simplex closes exactly.
pub fn stick_breaking<R: Rng>(alpha_mass: f64, h: usize, rng: &mut R) -> Result<Vec<f64>> {
    if h < 1 || alpha_mass <= 0.0 {
        return Err(Error::Parameter("stick breaking needs H >= 1, mass > 0".into()));
    }
    let beta = Beta::new(1.0, alpha_mass)
        .map_err(|e| Error::Parameter(format!("beta params: {e}")))?;
    let mut weights = Vec::with_capacity(h);
    let mut remaining = 1.0;
    for k in 0..h {
        if k + 1 == h {
            weights.push(remaining);
        } else {
            let v: f64 = beta.sample(rng);
            weights.push(v * remaining);
            remaining *= 1.0 - v;
        }
    }
    Ok(weights)
}

/// Draw a full mixture from the prior: interleaved (stick, atom) pairs so
/// that a larger truncation level extends a smaller one draw-for-draw, then
/// sigma from its (possibly truncated) prior.
pub fn sample_prior<R: Rng>(config: &DpPriorConfig, rng: &mut R) -> Result<SymmetrizedMixture> {
    // sigma first so draws at different truncation levels share it
    let sigma = config.sample_sigma(rng)?;
    let beta = Beta::new(1.0, config.alpha_mass)
        .map_err(|e| Error::Parameter(format!("beta params: {e}")))?;
    let mut weights = Vec::with_capacity(config.h);
    let mut atoms = Vec::with_capacity(config.h);
    let mut remaining = 1.0;
    for k in 0..config.h {
        let v: f64 = beta.sample(rng);
        let z = sample_truncated_normal(
            rng,
            0.0,
            config.base_scale,
            -config.half_width,
            config.half_width,
        )?;
        if k + 1 == config.h {
            weights.push(remaining);
        } else {
            weights.push(v * remaining);
            remaining *= 1.0 - v;
        }
        atoms.push(z);
    }
    SymmetrizedMixture::new(weights, atoms, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn default_config(n: usize) -> DpPriorConfig {
        DpPriorBlock::default().build(n).unwrap()
    }

    #[test]
    fn single_stick_absorbs_everything() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let w = stick_breaking(1.0, 1, &mut rng).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn sticks_reproducible_and_simplex() {
        let mut a = ChaCha12Rng::seed_from_u64(4);
        let mut b = ChaCha12Rng::seed_from_u64(4);
        let wa = stick_breaking(1.0, 50, &mut a).unwrap();
        let wb = stick_breaking(1.0, 50, &mut b).unwrap();
        assert_eq!(wa, wb);
        let total: f64 = wa.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(wa.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn first_stick_mean_is_half_for_unit_mass() {
        // Beta(1,1) is uniform: E[w_1] = 1/2.
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let reps = 10_000;
        let m: f64 = (0..reps)
            .map(|_| stick_breaking(1.0, 50, &mut rng).unwrap()[0])
            .sum::<f64>()
            / reps as f64;
        assert!((m - 0.5).abs() < 0.02, "mean first weight {m}");
    }

    #[test]
    fn degenerate_base_gives_standard_normal() {
        let mix = SymmetrizedMixture::new(vec![1.0], vec![0.0], 1.0).unwrap();
        assert!((mix.eval(0.0) - 0.3989422804014327).abs() < 1e-14);
        for &y in &[0.5f64, 1.0, 3.0] {
            let want = (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((mix.eval(y) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_single_atom_at_origin() {
        // atom z = 2, sigma = 1 at y = 0: both kernels coincide at phi(2).
        let mix = SymmetrizedMixture::new(vec![1.0], vec![2.0], 1.0).unwrap();
        assert!((mix.eval(0.0) - 0.05399096651318806).abs() < 1e-14);
    }

    #[test]
    fn eval_symmetric_at_machine_precision() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let cfg = default_config(100);
        let mix = sample_prior(&cfg, &mut rng).unwrap();
        for &y in &[0.17, 1.3, 2.9, 7.2] {
            assert_eq!(mix.eval(y), mix.eval(-y), "symmetrizer must be algebraic");
        }
    }

    #[test]
    fn draw_integrates_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let cfg = default_config(50);
        let mix = sample_prior(&cfg, &mut rng).unwrap();
        let v = quad::integrate_real_line(|y| mix.eval(y), 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "integral {v}");
    }

    #[test]
    fn sigma_prior_moment_matches_inverse_gamma() {
        // m0 = 2, a0 = 3, b0 = 2: E[sigma^2] = b0/(a0-1) = 1.
        let block = DpPriorBlock {
            a0: 3.0,
            b0: 2.0,
            ..DpPriorBlock::default()
        };
        let cfg = block.build(100).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let reps = 10_000;
        let m: f64 = (0..reps)
            .map(|_| cfg.sample_sigma(&mut rng).unwrap().powi(2))
            .sum::<f64>()
            / reps as f64;
        assert!((m - 1.0).abs() < 0.05, "mean sigma^2 {m}");
    }

    #[test]
    fn truncation_tail_is_negligible() {
        // H = 50 vs H = 200 with matched draws: prior-predictive difference
        // at fixed y is at most the stick tail mass.
        let b50 = DpPriorBlock {
            h: 50,
            ..DpPriorBlock::default()
        };
        let b200 = DpPriorBlock {
            h: 200,
            ..DpPriorBlock::default()
        };
        let mut r1 = ChaCha12Rng::seed_from_u64(11);
        let mut r2 = ChaCha12Rng::seed_from_u64(11);
        let m50 = sample_prior(&b50.build(100).unwrap(), &mut r1).unwrap();
        let m200 = sample_prior(&b200.build(100).unwrap(), &mut r2).unwrap();
        for &y in &[0.0, 0.7, 2.0] {
            assert!(
                (m50.eval(y) - m200.eval(y)).abs() <= 1e-6,
                "truncation gap at {y}: {} vs {}",
                m50.eval(y),
                m200.eval(y)
            );
        }
    }

    #[test]
    fn bvm_mode_narrows_supports() {
        let block = DpPriorBlock {
            trunc_mode: TruncMode::Bvm { tau: 2.0 },
            ..DpPriorBlock::default()
        };
        let cfg = block.build(100).unwrap();
        assert!((cfg.half_width - (100f64).ln()).abs() < 1e-12);
        assert!((cfg.sigma_max - (100f64).ln()).abs() < 1e-12);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let mix = sample_prior(&cfg, &mut rng).unwrap();
            assert!(mix.atoms.iter().all(|z| z.abs() <= cfg.half_width));
            assert!(mix.sigma <= cfg.sigma_max);
        }
    }

    #[test]
    fn log_lik_continuity_smoke() {
        let mix = SymmetrizedMixture::new(vec![0.6, 0.4], vec![1.0, 3.0], 0.9).unwrap();
        let res = [0.3, -1.2, 2.0];
        let base = mix.log_lik(&res);
        let mut bumped = mix.clone();
        bumped.sigma += 1e-7;
        assert!((bumped.log_lik(&res) - base).abs() < 1e-4);
        let mut bumped2 = mix.clone();
        bumped2.atoms[0] += 1e-7;
        assert!((bumped2.log_lik(&res) - base).abs() < 1e-4);
    }

    #[test]
    fn score_matches_finite_difference() {
        let mix = SymmetrizedMixture::new(vec![0.5, 0.5], vec![0.8, 2.5], 1.1).unwrap();
        let h = 1e-6;
        for &y in &[0.2, 1.4, -3.0] {
            let fd = (mix.log_eval(y + h) - mix.log_eval(y - h)) / (2.0 * h);
            assert!((mix.score_at(y) - fd).abs() < 1e-6);
        }
    }
}
