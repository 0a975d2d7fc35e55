//! Distances, score moments, the local quadratic objects (nu, V, G), the
//! Gaussian limit law, the LAN residual, and chain-facing diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coef_prior::SparseCoefficient;
use crate::design::DesignMatrix;
use crate::dist::std_normal_cdf;
use crate::quad;
use crate::{Error, Result, ScoredDensity};

const QUAD_TOL: f64 = 1e-9;

/// `eta(. - shift)`.
pub struct Shifted<'a, D: ScoredDensity + ?Sized> {
    pub inner: &'a D,
    pub shift: f64,
}

impl<D: ScoredDensity + ?Sized> ScoredDensity for Shifted<'_, D> {
    fn density(&self, y: f64) -> f64 {
        self.inner.density(y - self.shift)
    }
    fn log_density(&self, y: f64) -> f64 {
        self.inner.log_density(y - self.shift)
    }
    fn score(&self, y: f64) -> f64 {
        self.inner.score(y - self.shift)
    }
}

/// Squared Hellinger distance, affinity form:
/// `d_H^2 = 1 - int sqrt(eta1 eta2)`. The affinity integral is better
/// conditioned in the tails than `int (sqrt eta1 - sqrt eta2)^2 / 2`.
pub fn hellinger_sq<A, B>(eta1: &A, eta2: &B) -> Result<f64>
where
    A: ScoredDensity + ?Sized,
    B: ScoredDensity + ?Sized,
{
    let bc = quad::integrate_real_line(
        |y| (eta1.density(y).max(0.0) * eta2.density(y).max(0.0)).sqrt(),
        QUAD_TOL,
    )?;
    Ok((1.0 - bc).clamp(0.0, 1.0))
}

/// Hellinger distance, in [0, 1].
pub fn hellinger<A, B>(eta1: &A, eta2: &B) -> Result<f64>
where
    A: ScoredDensity + ?Sized,
    B: ScoredDensity + ?Sized,
{
    Ok(hellinger_sq(eta1, eta2)?.sqrt())
}

/// Mean Hellinger distance between the two regression laws:
/// `d_n^2 = n^{-1} sum_i d_H^2(eta1(. - x_i'th1), eta2(. - x_i'th2))`.
/// Returns d_n. `theta1`, `theta2` are dense p-vectors.
pub fn mean_hellinger<A, B>(
    theta1: &[f64],
    eta1: &A,
    theta2: &[f64],
    eta2: &B,
    x: &DesignMatrix,
) -> Result<f64>
where
    A: ScoredDensity + ?Sized,
    B: ScoredDensity + ?Sized,
{
    let p = x.p();
    if theta1.len() != p || theta2.len() != p {
        return Err(Error::Parameter(format!(
            "theta length must equal p = {p}, got {} and {}",
            theta1.len(),
            theta2.len()
        )));
    }
    let n = x.n();
    let mut total = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let delta: f64 = (0..p).map(|j| row[j] * (theta1[j] - theta2[j])).sum();
        // shift both laws by x_i' theta1: eta1(u) vs eta2(u + delta).
        let shifted = Shifted {
            inner: eta2,
            shift: -delta,
        };
        total += hellinger_sq(eta1, &shifted)?;
    }
    Ok((total / n as f64).sqrt())
}

/// `nu_eta = E_{eta0}[ ldot_eta ldot_{eta0} ]` by quadrature.
pub fn nu<A, B>(eta: &A, eta0: &B) -> Result<f64>
where
    A: ScoredDensity + ?Sized,
    B: ScoredDensity + ?Sized,
{
    let v = quad::integrate_real_line(
        |y| {
            let w = eta0.density(y);
            if w == 0.0 {
                0.0
            } else {
                eta.score(y) * eta0.score(y) * w
            }
        },
        1e-8,
    )?;
    if !v.is_finite() {
        return Err(Error::Numeric("nu integrand diverged".into()));
    }
    Ok(v)
}

fn residuals(x: &DesignMatrix, y: &DVector<f64>, theta: &SparseCoefficient) -> DVector<f64> {
    y - x.predict(&theta.support, &theta.values)
}

/// The local quadratic pair (G_{n,S}, V_{n,S}) at the truth:
/// `G_{n,S} = -n^{-1/2} sum_i ldot_{eta0}(eps_i) x_{i,S}` (the score of the
/// regression log-likelihood in theta) and `V_{n,S} = nu_{eta0} Sigma_S`.
pub fn local_quadratic<D>(
    x: &DesignMatrix,
    y: &DVector<f64>,
    theta0: &SparseCoefficient,
    eta0: &D,
    support: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    D: ScoredDensity + ?Sized,
{
    let n = x.n();
    let eps = residuals(x, y, theta0);
    let k = support.len();
    let mut g = DVector::zeros(k);
    let scale = -1.0 / (n as f64).sqrt();
    for i in 0..n {
        let s = eta0.score(eps[i]);
        for (a, &j) in support.iter().enumerate() {
            g[a] += scale * s * x.entries()[(i, j)];
        }
    }
    let nu0 = nu(eta0, eta0)?;
    let v = x.gram_sub(support) * nu0;
    Ok((g, v))
}

/// The Gaussian limit of the posterior on theta_{S0} under the truth.
#[derive(Clone, Debug)]
pub struct LimitLaw {
    pub support: Vec<usize>,
    /// Center `thetahat = n^{-1/2} V^{-1} G + theta0_{S0}`.
    pub center: DVector<f64>,
    /// Covariance `n^{-1} V^{-1}`; symmetric positive definite.
    pub covariance: DMatrix<f64>,
}

pub fn limit_law<D>(
    x: &DesignMatrix,
    y: &DVector<f64>,
    theta0: &SparseCoefficient,
    eta0: &D,
) -> Result<LimitLaw>
where
    D: ScoredDensity + ?Sized,
{
    let support = theta0.support.clone();
    let (g, v) = local_quadratic(x, y, theta0, eta0, &support)?;
    let chol = Cholesky::new(v.clone())
        .ok_or_else(|| Error::Numeric("V_{n,S0} is not positive definite".into()))?;
    let n = x.n() as f64;
    let mut center = chol.solve(&g) / n.sqrt();
    for (a, &val) in theta0.values.iter().enumerate() {
        center[a] += val;
    }
    let vinv = chol.inverse();
    let covariance = &vinv / n;
    // the covariance must itself factor
    Cholesky::new(covariance.clone())
        .ok_or_else(|| Error::Numeric("limit covariance not positive definite".into()))?;
    Ok(LimitLaw {
        support,
        center,
        covariance,
    })
}

/// LAN remainder
/// `r_n = L_n(th,eta) - L_n(th0,eta) - sqrt(n) (th-th0)' Gn ldot + (n/2)(th-th0)' V (th-th0)`,
/// with the empirical-process term expanded as
/// `sqrt(n) (th-th0)' Gn ldot = -sum_i ldot_{eta0}(eps_i) x_i'(th-th0)`.
pub fn lan_residual<A, B>(
    x: &DesignMatrix,
    y: &DVector<f64>,
    theta: &SparseCoefficient,
    eta: &A,
    theta0: &SparseCoefficient,
    eta0: &B,
) -> Result<f64>
where
    A: ScoredDensity + ?Sized,
    B: ScoredDensity + ?Sized,
{
    let n = x.n();
    // union support carries everything that moves
    let mut union: Vec<usize> = theta.support.iter().chain(&theta0.support).copied().collect();
    union.sort_unstable();
    union.dedup();
    if union.is_empty() {
        return Ok(0.0);
    }
    let dense = theta.to_dense(x.p());
    let dense0 = theta0.to_dense(x.p());
    let delta: Vec<f64> = union.iter().map(|&j| dense[j] - dense0[j]).collect();

    let eps = residuals(x, y, theta0);
    let mut loglik_gap = 0.0;
    let mut linear = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let xd: f64 = union.iter().zip(&delta).map(|(&j, &d)| row[j] * d).sum();
        loglik_gap += eta.log_density(eps[i] - xd) - eta.log_density(eps[i]);
        linear += -eta0.score(eps[i]) * xd;
    }
    let nu0 = nu(eta0, eta0)?;
    let v = x.gram_sub(&union) * nu0;
    let dv = DVector::from_vec(delta);
    let quadratic = 0.5 * n as f64 * (dv.transpose() * &v * &dv)[(0, 0)];
    Ok(loglik_gap - linear + quadratic)
}

/// Surrogate Bernstein–von Mises diagnostics for a coefficient chain against
/// the Gaussian limit law. Gap fields are NaN when no draw contains S0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BvmReport {
    /// `sqrt(n) * || mean(theta_{S0}) - thetahat ||_2`
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub mean_gap: f64,
    /// relative Frobenius gap between n * Cov(theta_{S0}) and V^{-1}
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub cov_gap: f64,
    /// max over S0 coordinates of the KS statistic vs the limit marginal
    #[serde(deserialize_with = "crate::nan_from_null")]
    pub proj_ks: f64,
    /// posterior mass of {S != S0}
    pub wrong_model_mass: f64,
    /// number of draws with S containing S0 (the conditioning set)
    pub conditioning_draws: usize,
}

pub fn bvm_report(draws: &[SparseCoefficient], law: &LimitLaw, n: usize) -> Result<BvmReport> {
    if draws.is_empty() {
        return Err(Error::Parameter("empty chain".into()));
    }
    let s0 = &law.support;
    let k = s0.len();
    let mut wrong = 0usize;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for d in draws {
        if d.support != *s0 {
            wrong += 1;
        }
        // conditioning set: draws whose support contains S0
        if s0.iter().all(|j| d.support.binary_search(j).is_ok()) {
            let row = s0
                .iter()
                .map(|&j| {
                    let a = d.support.binary_search(&j).unwrap();
                    d.values[a]
                })
                .collect();
            rows.push(row);
        }
    }
    let wrong_model_mass = wrong as f64 / draws.len() as f64;
    if rows.is_empty() || k == 0 {
        return Ok(BvmReport {
            mean_gap: f64::NAN,
            cov_gap: f64::NAN,
            proj_ks: f64::NAN,
            wrong_model_mass,
            conditioning_draws: rows.len(),
        });
    }
    let m = rows.len();
    let mut mean = vec![0.0; k];
    for r in &rows {
        for (a, &v) in r.iter().enumerate() {
            mean[a] += v / m as f64;
        }
    }
    let sqrt_n = (n as f64).sqrt();
    let mean_gap = sqrt_n
        * mean
            .iter()
            .zip(law.center.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

    let mut cov = DMatrix::zeros(k, k);
    for r in &rows {
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    cov /= (m.max(2) - 1) as f64;
    let target = &law.covariance * n as f64; // = V^{-1}
    let cov_gap = ((cov * n as f64) - &target).norm() / target.norm();

    let mut proj_ks: f64 = 0.0;
    for a in 0..k {
        let mut xs: Vec<f64> = rows.iter().map(|r| r[a]).collect();
        xs.sort_by(|u, v| u.total_cmp(v));
        let mu = law.center[a];
        let sd = law.covariance[(a, a)].sqrt();
        let mut ks: f64 = 0.0;
        for (i, &v) in xs.iter().enumerate() {
            let f = std_normal_cdf((v - mu) / sd);
            let lo = i as f64 / m as f64;
            let hi = (i + 1) as f64 / m as f64;
            ks = ks.max((f - lo).abs()).max((hi - f).abs());
        }
        proj_ks = proj_ks.max(ks);
    }

    Ok(BvmReport {
        mean_gap,
        cov_gap,
        proj_ks: proj_ks.min(1.0),
        wrong_model_mass,
        conditioning_draws: m,
    })
}

/// Per-replication selection summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionRow {
    /// posterior mass of {S = S0}
    pub exact_mass: f64,
    /// posterior mass of {S is a strict superset of S0}
    pub superset_mass: f64,
    /// is the modal model equal to S0
    pub modal_is_true: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    pub mean_exact_mass: f64,
    pub mean_superset_mass: f64,
    pub modal_true_fraction: f64,
}

pub fn selection_metrics(chains: &[Vec<SparseCoefficient>], s0: &[usize]) -> Result<SelectionTable> {
    if chains.is_empty() {
        return Err(Error::Parameter("no replications".into()));
    }
    let mut rows = Vec::with_capacity(chains.len());
    for draws in chains {
        if draws.is_empty() {
            return Err(Error::Parameter("empty chain in replication set".into()));
        }
        let mut exact = 0usize;
        let mut superset = 0usize;
        let mut counts: std::collections::HashMap<&[usize], usize> = std::collections::HashMap::new();
        for d in draws {
            if d.support == s0 {
                exact += 1;
            } else if s0.iter().all(|j| d.support.binary_search(j).is_ok()) {
                superset += 1;
            }
            *counts.entry(d.support.as_slice()).or_insert(0) += 1;
        }
        let modal = counts
            .iter()
            .max_by_key(|(_, &c)| c)
            .map(|(s, _)| *s)
            .unwrap_or(&[]);
        rows.push(SelectionRow {
            exact_mass: exact as f64 / draws.len() as f64,
            superset_mass: superset as f64 / draws.len() as f64,
            modal_is_true: modal == s0,
        });
    }
    let r = rows.len() as f64;
    Ok(SelectionTable {
        mean_exact_mass: rows.iter().map(|x| x.exact_mass).sum::<f64>() / r,
        mean_superset_mass: rows.iter().map(|x| x.superset_mass).sum::<f64>() / r,
        modal_true_fraction: rows.iter().filter(|x| x.modal_is_true).count() as f64 / r,
        rows,
    })
}

/// Beta-min check: is the smallest nonzero |theta0_j| above the threshold?
pub fn beta_min_satisfied(theta0: &SparseCoefficient, threshold: f64) -> bool {
    theta0
        .values
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min)
        >= threshold
}

/// Posterior median and 0.9-quantile of the coefficient errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefErrorSummary {
    pub l1_median: f64,
    pub l1_q90: f64,
    pub l2_median: f64,
    pub l2_q90: f64,
    pub pred_median: f64,
    pub pred_q90: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn coef_errors(
    draws: &[SparseCoefficient],
    theta0: &SparseCoefficient,
    x: &DesignMatrix,
) -> Result<CoefErrorSummary> {
    if draws.is_empty() {
        return Err(Error::Parameter("empty chain".into()));
    }
    let p = x.p();
    let dense0 = theta0.to_dense(p);
    let mut l1 = Vec::with_capacity(draws.len());
    let mut l2 = Vec::with_capacity(draws.len());
    let mut pred = Vec::with_capacity(draws.len());
    for d in draws {
        let dense = d.to_dense(p);
        let diff: Vec<f64> = dense.iter().zip(&dense0).map(|(a, b)| a - b).collect();
        l1.push(diff.iter().map(|v| v.abs()).sum());
        l2.push(diff.iter().map(|v| v * v).sum::<f64>().sqrt());
        let fitted = x.entries() * DVector::from_vec(diff);
        pred.push(fitted.norm());
    }
    for v in [&mut l1, &mut l2, &mut pred] {
        v.sort_by(|a, b| a.total_cmp(b));
    }
    Ok(CoefErrorSummary {
        l1_median: quantile(&l1, 0.5),
        l1_q90: quantile(&l1, 0.9),
        l2_median: quantile(&l2, 0.5),
        l2_q90: quantile(&l2, 0.9),
        pred_median: quantile(&pred, 0.5),
        pred_q90: quantile(&pred, 0.9),
    })
}
