//! Design matrices, their Gram matrices, and the regularity constants
//! phi(s) (uniform compatibility number) and psi(s) (restricted eigenvalue):
//!
//! ```text
//! phi^2(s) = inf { s_t * t' Sigma t / ||t||_1^2 : 0 < s_t <= s }
//! psi^2(s) = inf {       t' Sigma t / ||t||_2^2 : 0 < s_t <= s }
//! ```
//!
//! with `Sigma = X'X / n`. Both are computed exactly by support enumeration
//! at desk scale; a randomized lower-bound mode covers larger instances.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Result};

/// Fixed n x p covariate matrix with its cached Gram matrix `X'X / n`.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    entries: DMatrix<f64>,
    gram: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    IidGaussian,
    Equicorrelated { rho: f64 },
    IdentityBlock,
}

/// Exact regularity constants at sparsity `s`, with the support attaining
/// the restricted eigenvalue.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    pub s: usize,
    pub phi: f64,
    pub psi: f64,
    pub argmin_support: Vec<usize>,
}

/// Enumeration guard: sum_{k<=s} C(p,k) must stay below this.
pub const ENUMERATION_CAP: u64 = 1_000_000;

impl DesignMatrix {
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        let (n, p) = entries.shape();
        if n == 0 || p == 0 {
            return Err(Error::Parameter("design needs n >= 1 and p >= 1".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("design entries must be finite".into()));
        }
        let gram = entries.transpose() * &entries / n as f64;
        Ok(Self { n, p, entries, gram })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Cached `X'X / n`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Row i as a vector view.
    pub fn row(&self, i: usize) -> nalgebra::RowDVector<f64> {
        self.entries.row(i).into_owned()
    }

    /// `Sigma_S` as a dense |S| x |S| matrix from the cached Gram.
    pub fn gram_sub(&self, support: &[usize]) -> DMatrix<f64> {
        let k = support.len();
        DMatrix::from_fn(k, k, |a, b| self.gram[(support[a], support[b])])
    }

    /// `X_S' y` for a response vector, using the raw entries.
    pub fn xty_sub(&self, support: &[usize], y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            support.len(),
            support.iter().map(|&j| self.entries.column(j).dot(y)),
        )
    }

    /// X_S theta_S as an n-vector.
    pub fn predict(&self, support: &[usize], values: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (idx, &j) in support.iter().enumerate() {
            out.axpy(values[idx], &self.entries.column(j).into_owned(), 1.0);
        }
        out
    }

    /// CSV persistence: one-line header `n,p`, then one row per line.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{},{}", self.n, self.p)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.p)
                .map(|j| format!("{:.17e}", self.entries[(i, j)]))
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parameter("empty design file".into()))??;
        let dims: Vec<usize> = header
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parameter(format!("bad design header: {e}")))?;
        if dims.len() != 2 {
            return Err(Error::Parameter("design header must be `n,p`".into()));
        }
        let (n, p) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(n * p);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                data.push(
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parameter(format!("bad design entry: {e}")))?,
                );
            }
        }
        if data.len() != n * p {
            return Err(Error::Parameter(format!(
                "design file has {} entries, expected {}",
                data.len(),
                n * p
            )));
        }
        Self::from_entries(DMatrix::from_row_slice(n, p, &data))
    }
}

/// Construct a design matrix of the requested kind, deterministic in `seed`.
pub fn gen_design(n: usize, p: usize, kind: DesignKind, seed: u64) -> Result<DesignMatrix> {
    if n == 0 || p == 0 {
        return Err(Error::Parameter("n and p must be positive".into()));
    }
    let entries = match kind {
        DesignKind::IidGaussian => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
        DesignKind::IdentityBlock => {
            // Columns orthogonal with ||X_j||^2 = n for the columns that fit,
            // so Sigma is the identity (rank-deficient when p > n).
            let mut m = DMatrix::zeros(n, p);
            let mut counts = vec![0usize; p];
            for i in 0..n {
                counts[i % p] += 1;
            }
            for i in 0..n {
                let j = i % p;
                m[(i, j)] = (n as f64 / counts[j] as f64).sqrt();
            }
            m
        }
        DesignKind::Equicorrelated { rho } => {
            let lo = -1.0 / (p as f64 - 1.0).max(1.0);
            if !(rho > lo && rho < 1.0) {
                return Err(Error::Parameter(format!(
                    "equicorrelated rho must lie in ({lo}, 1), got {rho}"
                )));
            }
            if n < p {
                return Err(Error::Parameter(
                    "equicorrelated design needs n >= p for an exact Gram".into(),
                ));
            }
            // X = sqrt(n) [R^{1/2}; 0] gives Sigma = R exactly, where
            // R^{1/2} = a I + b 11' with a = sqrt(1-rho),
            // b = (sqrt(1-rho+p rho) - sqrt(1-rho)) / p.
            let a = (1.0 - rho).sqrt();
            let b = ((1.0 - rho + p as f64 * rho).sqrt() - a) / p as f64;
            let mut m = DMatrix::zeros(n, p);
            let scale = (n as f64).sqrt();
            for i in 0..p {
                for j in 0..p {
                    m[(i, j)] = scale * (b + if i == j { a } else { 0.0 });
                }
            }
            m
        }
    };
    DesignMatrix::from_entries(entries)
}

/// `max |x_ij| / sqrt(log p)`; the paper's entry-bound constant M.
pub fn entry_bound_constant(x: &DesignMatrix) -> Result<f64> {
    if x.p < 2 {
        return Err(Error::Parameter("entry bound needs p >= 2".into()));
    }
    let m = x.entries.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(m / (x.p as f64).ln().sqrt())
}

fn check_enumeration_guard(p: usize, s: usize) -> Result<()> {
    let mut total: u64 = 0;
    let mut c: u64 = 1; // C(p, 0)
    for k in 1..=s {
        c = match c
            .checked_mul((p - k + 1) as u64)
            .map(|v| v / k as u64)
        {
            Some(v) => v,
            None => return Err(capacity_err(p, s)),
        };
        total = total.saturating_add(c);
        if total > ENUMERATION_CAP {
            return Err(capacity_err(p, s));
        }
    }
    Ok(())
}

fn capacity_err(p: usize, s: usize) -> Error {
    Error::Capacity(format!(
        "support enumeration for p = {p}, s = {s} exceeds {ENUMERATION_CAP}; \
         use the sampled lower-bound mode (regularity_sampled)"
    ))
}

/// Visit every k-subset of {0..p-1} in lexicographic order.
fn for_each_combination<F: FnMut(&[usize])>(p: usize, k: usize, mut f: F) {
    if k == 0 || k > p {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < p - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Restricted eigenvalue psi(s) by exact enumeration over supports of size s
/// (by eigenvalue interlacing the minimum over |S| <= s is attained at
/// |S| = s).
pub fn restricted_eigenvalue(x: &DesignMatrix, s: usize) -> Result<RegularityReport> {
    if s == 0 || s > x.p {
        return Err(Error::Parameter(format!(
            "sparsity s must satisfy 1 <= s <= p, got {s}"
        )));
    }
    check_enumeration_guard(x.p, s)?;
    let k = s.min(x.p);
    let mut best = f64::INFINITY;
    let mut best_support = Vec::new();
    for_each_combination(x.p, k, |sup| {
        let lam = min_eig_sym(&x.gram_sub(sup));
        if lam < best {
            best = lam;
            best_support = sup.to_vec();
        }
    });
    let psi = best.max(0.0).sqrt();
    let phi = compatibility_value(x, s)?.0;
    Ok(RegularityReport {
        s,
        phi,
        psi,
        argmin_support: best_support,
    })
}

/// Uniform compatibility number phi(s) by support x sign-orthant enumeration.
///
/// On a fixed orthant the l1 constraint is linear, so the minimizer of the
/// quadratic is `Sigma_S^{-1} sigma / (sigma' Sigma_S^{-1} sigma)`; candidates
/// whose minimizer leaves the orthant land on a smaller support that is
/// enumerated separately. A singular `Sigma_S` contributes phi = 0.
pub fn compatibility(x: &DesignMatrix, s: usize) -> Result<RegularityReport> {
    if s == 0 || s > x.p {
        return Err(Error::Parameter(format!(
            "sparsity s must satisfy 1 <= s <= p, got {s}"
        )));
    }
    check_enumeration_guard(x.p, s)?;
    let (phi, support) = compatibility_value(x, s)?;
    let psi = restricted_eigenvalue(x, s)?.psi;
    Ok(RegularityReport {
        s,
        phi,
        psi,
        argmin_support: support,
    })
}

fn compatibility_value(x: &DesignMatrix, s: usize) -> Result<(f64, Vec<usize>)> {
    check_enumeration_guard(x.p, s)?;
    let mut best = f64::INFINITY;
    let mut best_support = Vec::new();
    for k in 1..=s.min(x.p) {
        for_each_combination(x.p, k, |sup| {
            let sig = x.gram_sub(sup);
            let chol = match sig.clone().cholesky() {
                Some(c) => c,
                None => {
                    // Singular principal submatrix: a null direction supported
                    // on `sup` drives the ratio to zero.
                    if min_eig_sym(&sig) <= 1e-12 {
                        best = 0.0;
                        best_support = sup.to_vec();
                    }
                    return;
                }
            };
            let mut signs = vec![1.0f64; k];
            loop {
                let sv = DVector::from_column_slice(&signs);
                let w = chol.solve(&sv);
                // keep the candidate only if the minimizer sits inside the
                // orthant (all coordinates strictly of the proposed sign)
                let denom = sv.dot(&w);
                if denom > 0.0 && w.iter().zip(&signs).all(|(wi, si)| wi * si > 0.0) {
                    let cand = k as f64 / denom;
                    if cand < best {
                        best = cand;
                        best_support = sup.to_vec();
                    }
                }
                // next sign pattern
                let mut i = 0;
                loop {
                    if i == k {
                        return;
                    }
                    if signs[i] > 0.0 {
                        signs[i] = -1.0;
                        break;
                    }
                    signs[i] = 1.0;
                    i += 1;
                }
            }
        });
        if best == 0.0 {
            break;
        }
    }
    if !best.is_finite() {
        // every orthant minimizer escaped; this cannot happen for SPD Gram
        // matrices but guard anyway
        return Err(Error::Numeric("no compatibility candidate found".into()));
    }
    Ok((best.max(0.0).sqrt(), best_support))
}

/// Randomized lower-bound fallback when exact enumeration is infeasible:
/// samples `n_samples` supports of size `s` and returns the smallest psi/phi
/// candidates seen. Upper-bounds the true constants.
pub fn regularity_sampled<R: Rng>(
    x: &DesignMatrix,
    s: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<RegularityReport> {
    if s == 0 || s > x.p {
        return Err(Error::Parameter(format!(
            "sparsity s must satisfy 1 <= s <= p, got {s}"
        )));
    }
    let all: Vec<usize> = (0..x.p).collect();
    let mut best_psi = f64::INFINITY;
    let mut best_phi = f64::INFINITY;
    let mut best_support = Vec::new();
    for _ in 0..n_samples.max(1) {
        let mut sup: Vec<usize> = all.choose_multiple(rng, s).cloned().collect();
        sup.sort_unstable();
        let sig = x.gram_sub(&sup);
        let lam = min_eig_sym(&sig);
        if lam < best_psi {
            best_psi = lam;
            best_support = sup.clone();
        }
        if let Some(chol) = sig.clone().cholesky() {
            let k = sup.len();
            let mut signs = vec![1.0f64; k];
            loop {
                let sv = DVector::from_column_slice(&signs);
                let w = chol.solve(&sv);
                let denom = sv.dot(&w);
                if denom > 0.0 && w.iter().zip(&signs).all(|(wi, si)| wi * si > 0.0) {
                    best_phi = best_phi.min(k as f64 / denom);
                }
                let mut i = 0;
                let mut done = false;
                loop {
                    if i == k {
                        done = true;
                        break;
                    }
                    if signs[i] > 0.0 {
                        signs[i] = -1.0;
                        break;
                    }
                    signs[i] = 1.0;
                    i += 1;
                }
                if done {
                    break;
                }
            }
        } else {
            best_phi = 0.0;
        }
    }
    Ok(RegularityReport {
        s,
        phi: best_phi.max(0.0).sqrt(),
        psi: best_psi.max(0.0).sqrt(),
        argmin_support: best_support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_design(n: usize, p: usize) -> DesignMatrix {
        gen_design(n, p, DesignKind::IdentityBlock, 0).unwrap()
    }

    #[test]
    fn identity_block_gram_is_identity() {
        let x = identity_design(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((x.gram()[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gen_design_deterministic() {
        let a = gen_design(100, 50, DesignKind::IidGaussian, 7).unwrap();
        let b = gen_design(100, 50, DesignKind::IidGaussian, 7).unwrap();
        assert!(a.entries().iter().all(|v| v.is_finite()));
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn gram_matches_recomputation() {
        let x = gen_design(30, 10, DesignKind::IidGaussian, 3).unwrap();
        let g = x.entries().transpose() * x.entries() / 30.0;
        let diff = (&g - x.gram()).abs().max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn entry_bound_zero_matrix() {
        let x = DesignMatrix::from_entries(DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(entry_bound_constant(&x).unwrap(), 0.0);
    }

    #[test]
    fn entry_bound_single_entry() {
        let mut m = DMatrix::zeros(3, 4);
        m[(1, 2)] = 2.0 * (4.0f64).ln().sqrt();
        let x = DesignMatrix::from_entries(m).unwrap();
        assert!((entry_bound_constant(&x).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn entry_bound_needs_p_ge_2() {
        let x = DesignMatrix::from_entries(DMatrix::zeros(3, 1)).unwrap();
        assert!(entry_bound_constant(&x).is_err());
    }

    #[test]
    fn psi_identity_gram() {
        let x = identity_design(6, 4);
        for s in 1..=3 {
            let r = restricted_eigenvalue(&x, s).unwrap();
            assert!((r.psi - 1.0).abs() < 1e-12, "s={s} psi={}", r.psi);
        }
    }

    #[test]
    fn psi_equicorrelated_closed_form() {
        let x = gen_design(8, 6, DesignKind::Equicorrelated { rho: 0.5 }, 0).unwrap();
        let r = restricted_eigenvalue(&x, 3).unwrap();
        // k x k equicorrelation eigenvalues: 1 - rho (mult k-1), 1 + (k-1) rho
        assert!((r.psi * r.psi - 0.5).abs() < 1e-10, "psi^2 = {}", r.psi * r.psi);
    }

    #[test]
    fn phi_identity_gram() {
        let x = identity_design(6, 4);
        for s in 1..=3 {
            let r = compatibility(&x, s).unwrap();
            assert!((r.phi - 1.0).abs() < 1e-12, "s={s} phi={}", r.phi);
        }
    }

    #[test]
    fn phi_p_equals_one() {
        // p = 1: phi(1)^2 = Sigma_11
        let m = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let x = DesignMatrix::from_entries(m).unwrap();
        let r = compatibility(&x, 1).unwrap();
        let sigma11 = x.gram()[(0, 0)];
        assert!((r.phi * r.phi - sigma11).abs() < 1e-12);
    }

    /// Dense grid-search oracle for psi over unit-norm 2-sparse vectors.
    fn psi2_grid_oracle(x: &DesignMatrix) -> f64 {
        let g = x.gram();
        let mut best = f64::INFINITY;
        let steps = 2000;
        for a in 0..x.p() {
            for b in (a + 1)..x.p() {
                for t in 0..steps {
                    let ang = std::f64::consts::PI * t as f64 / steps as f64;
                    let (u, v) = (ang.cos(), ang.sin());
                    let q = u * u * g[(a, a)] + 2.0 * u * v * g[(a, b)] + v * v * g[(b, b)];
                    best = best.min(q);
                }
            }
            best = best.min(g[(a, a)]);
        }
        best
    }

    /// Grid-search oracle for phi over the l1 sphere of 2-sparse vectors.
    fn phi2_grid_oracle(x: &DesignMatrix) -> f64 {
        let g = x.gram();
        let mut best = f64::INFINITY;
        let steps = 4000;
        for a in 0..x.p() {
            best = best.min(g[(a, a)]);
            for b in (a + 1)..x.p() {
                for t in 1..steps {
                    let w = t as f64 / steps as f64;
                    for (sa, sb) in [(1.0, 1.0), (1.0, -1.0)] {
                        let (u, v): (f64, f64) = (sa * w, sb * (1.0 - w));
                        let q =
                            u * u * g[(a, a)] + 2.0 * u * v * g[(a, b)] + v * v * g[(b, b)];
                        best = best.min(2.0 * q);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn psi_matches_grid_oracle() {
        let x = gen_design(8, 6, DesignKind::IidGaussian, 11).unwrap();
        let r = restricted_eigenvalue(&x, 2).unwrap();
        let oracle = psi2_grid_oracle(&x);
        assert!(
            (r.psi * r.psi - oracle).abs() < 1e-4,
            "exact {} grid {}",
            r.psi * r.psi,
            oracle
        );
    }

    #[test]
    fn phi_matches_grid_oracle() {
        let x = gen_design(8, 6, DesignKind::IidGaussian, 13).unwrap();
        let r = compatibility(&x, 2).unwrap();
        let oracle = phi2_grid_oracle(&x);
        assert!(
            (r.phi * r.phi - oracle).abs() < 1e-4,
            "exact {} grid {}",
            r.phi * r.phi,
            oracle
        );
    }

    #[test]
    fn psi_le_phi_and_monotone_on_random_designs() {
        for seed in 0..100 {
            let x = gen_design(8, 6, DesignKind::IidGaussian, seed).unwrap();
            let mut prev_phi = f64::INFINITY;
            let mut prev_psi = f64::INFINITY;
            for s in 1..=3 {
                let r = compatibility(&x, s).unwrap();
                assert!(
                    r.psi <= r.phi + 1e-10,
                    "seed {seed} s {s}: psi {} > phi {}",
                    r.psi,
                    r.phi
                );
                assert!(r.phi <= prev_phi + 1e-10);
                assert!(r.psi <= prev_psi + 1e-10);
                prev_phi = r.phi;
                prev_psi = r.psi;
            }
        }
    }

    #[test]
    fn scale_covariance() {
        let x = gen_design(8, 5, DesignKind::IidGaussian, 21).unwrap();
        let c = 2.5;
        let scaled = DesignMatrix::from_entries(x.entries() * c).unwrap();
        let r1 = compatibility(&x, 2).unwrap();
        let r2 = compatibility(&scaled, 2).unwrap();
        assert!((r2.phi - c * r1.phi).abs() < 1e-9);
        assert!((r2.psi - c * r1.psi).abs() < 1e-9);
    }

    #[test]
    fn capacity_guard_trips() {
        let x = gen_design(10, 200, DesignKind::IidGaussian, 1).unwrap();
        match restricted_eigenvalue(&x, 8) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn sampled_mode_upper_bounds_exact() {
        let x = gen_design(8, 6, DesignKind::IidGaussian, 5).unwrap();
        let exact = restricted_eigenvalue(&x, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let approx = regularity_sampled(&x, 2, 200, &mut rng).unwrap();
        assert!(approx.psi >= exact.psi - 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let x = gen_design(5, 3, DesignKind::IidGaussian, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        x.save_csv(&path).unwrap();
        let y = DesignMatrix::load_csv(&path).unwrap();
        let diff = (x.entries() - y.entries()).abs().max();
        assert!(diff < 1e-15);
    }

    #[test]
    fn invalid_rho_rejected() {
        assert!(gen_design(8, 4, DesignKind::Equicorrelated { rho: 1.0 }, 0).is_err());
        assert!(gen_design(8, 4, DesignKind::Equicorrelated { rho: -0.5 }, 0).is_err());
    }
}
