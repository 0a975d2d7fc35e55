//! Semiparametric Bayesian sparse linear regression.
//!
//! The model is `Y_i = x_i' theta + eps_i` with a spike-and-slab Laplace
//! prior on `theta` and a symmetrized Dirichlet-process Gaussian location
//! mixture prior on the error density. The crate bundles:
//!
//! * [`design`] — design-matrix construction and the regularity constants
//!   phi(s) (uniform compatibility number) and psi(s) (restricted eigenvalue);
//! * [`error_density`] — analytic symmetric true-error families with scores
//!   and numeric condition checks;
//! * [`dpmix`] — the truncated stick-breaking symmetrized mixture prior;
//! * [`coef_prior`] — the spike-and-slab Laplace coefficient prior;
//! * [`sampler`] — a trans-dimensional Gibbs sampler for the joint posterior;
//! * [`metrics`] — Hellinger/score functionals, the Gaussian limit law and
//!   Bernstein–von Mises diagnostics;
//! * [`oracle`] — exhaustive exact posterior for tiny instances;
//! * [`harness`] — scenario configs, seeded replication driver and reports.

pub mod coef_prior;
pub mod design;
pub mod dist;
pub mod dpmix;
pub mod error_density;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod sampler;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// serde_json writes NaN as `null`; read it back as NaN so round-trips of
/// diagnostic records keep working.
pub(crate) fn nan_from_null<'de, D>(d: D) -> std::result::Result<f64, D::Error>
where
    D: serde::Deserializer<'de>,
{
    use serde::Deserialize;
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// A density on the real line with analytic log-density and score.
///
/// Implemented by the analytic truth families and by mixture snapshots so
/// that the metric functionals accept either side.
pub trait ScoredDensity {
    fn density(&self, y: f64) -> f64;
    fn log_density(&self, y: f64) -> f64;
    /// d/dy log density.
    fn score(&self, y: f64) -> f64;
}
