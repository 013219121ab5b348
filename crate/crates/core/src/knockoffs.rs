//! Knockoff construction: second-order Gaussian sampling from a covariance
//! model, a Gaussian-copula pipeline for non-Gaussian marginals, and fixed-X
//! equi-correlated knockoffs for design matrices treated as fixed.
//!
//! All samplers are pure functions of their inputs and RNG stream.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, CholFactor, SymMatrix};

/// Ridge added to every covariance solve.
const SOLVE_RIDGE: f64 = 1e-10;
/// Base jitter for Cholesky factorizations of the conditional covariance.
const CHOL_JITTER: f64 = 1e-10;

/// Second-order Gaussian knockoff model: covariance `sigma`, equi-correlated
/// diagonal `s`, and the derived factors `A = sigma^-1 S` and a Cholesky
/// factor of `M = 2S - S sigma^-1 S`.
#[derive(Debug, Clone)]
pub struct KnockoffModel {
    pub sigma: SymMatrix,
    pub s: Array1<f64>,
    pub a_mat: Array2<f64>,
    pub c_factor: CholFactor,
}

/// Serializable snapshot of a knockoff model; `(sigma, s)` fully determine
/// the construction, so derived factors are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnockoffModelSnapshot {
    pub version: u32,
    pub sigma: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

impl KnockoffModel {
    pub fn p(&self) -> usize {
        self.sigma.dim()
    }

    pub fn to_snapshot(&self) -> KnockoffModelSnapshot {
        KnockoffModelSnapshot {
            version: 1,
            sigma: self
                .sigma
                .as_array()
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            s: self.s.to_vec(),
        }
    }

    pub fn to_snapshot_json(&self) -> String {
        serde_json::to_string(&self.to_snapshot()).expect("snapshot serialization cannot fail")
    }

    pub fn from_snapshot(snap: &KnockoffModelSnapshot) -> Result<Self> {
        if snap.version != 1 {
            return Err(Error::DimensionMismatch(format!(
                "unsupported knockoff model snapshot version {}",
                snap.version
            )));
        }
        let p = snap.sigma.len();
        if p == 0 || snap.sigma.iter().any(|r| r.len() != p) || snap.s.len() != p {
            return Err(Error::DimensionMismatch(
                "snapshot sigma must be square and match s".into(),
            ));
        }
        let mut sigma = Array2::<f64>::zeros((p, p));
        for (i, row) in snap.sigma.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                sigma[[i, j]] = v;
            }
        }
        let sigma = SymMatrix::new(sigma)?;
        let s = Array1::from_vec(snap.s.clone());
        build_model_with_s(sigma, s)
    }

    pub fn from_snapshot_json(json: &str) -> Result<Self> {
        let snap: KnockoffModelSnapshot = serde_json::from_str(json)
            .map_err(|e| Error::DimensionMismatch(format!("snapshot parse error: {e}")))?;
        Self::from_snapshot(&snap)
    }
}

fn build_model_with_s(sigma: SymMatrix, s: Array1<f64>) -> Result<KnockoffModel> {
    let p = sigma.dim();
    let mut s_diag = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        s_diag[[j, j]] = s[j];
    }
    let a_mat = linalg::solve_spd(&sigma, &s_diag.view(), SOLVE_RIDGE)?;
    // M = 2S - S A, symmetrized before factorization.
    let mut m = s_diag.dot(&a_mat);
    m.mapv_inplace(|v| -v);
    for j in 0..p {
        m[[j, j]] += 2.0 * s[j];
    }
    let m = SymMatrix::symmetrized(m)?;
    let c_factor = linalg::cholesky_with_jitter(&m, CHOL_JITTER)?;
    Ok(KnockoffModel {
        sigma,
        s,
        a_mat,
        c_factor,
    })
}

/// Builds the equi-correlated Gaussian knockoff model from a covariance.
///
/// The shared diagonal value is `min(2 lambda_min(sigma), cap)` where the cap
/// is 1 for correlation-scaled inputs (all diagonal entries equal to 1 within
/// 1e-8) and `max_j sigma_jj` otherwise.
pub fn build_gaussian_model(sigma: SymMatrix) -> Result<KnockoffModel> {
    let p = sigma.dim();
    let (lambda_min, _) = linalg::sym_eig_extremes(&sigma, 1e-9)?;
    let is_correlation = sigma
        .as_array()
        .diag()
        .iter()
        .all(|&d| (d - 1.0).abs() <= 1e-8);
    let cap = if is_correlation {
        1.0
    } else {
        sigma
            .as_array()
            .diag()
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    };
    let s_val = (2.0 * lambda_min).min(cap).max(0.0);
    let s = Array1::from_elem(p, s_val);
    build_model_with_s(sigma, s)
}

/// Samples Gaussian knockoffs `x_tilde = x (I - A) + U C^T` with `U` i.i.d.
/// standard normal from the given stream.
pub fn sample_gaussian_knockoffs<R: Rng + ?Sized>(
    x: &ArrayView2<'_, f64>,
    model: &KnockoffModel,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if p != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "x has {p} columns but the model is for {}",
            model.p()
        )));
    }
    let mut i_minus_a = model.a_mat.clone();
    i_minus_a.mapv_inplace(|v| -v);
    for j in 0..p {
        i_minus_a[[j, j]] += 1.0;
    }
    let mut u = Array2::<f64>::zeros((n, p));
    for v in u.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    Ok(x.dot(&i_minus_a) + u.dot(&model.c_factor.lower.t()))
}

/// Per-feature empirical-quantile tables for the copula transform.
///
/// `sorted[j]` holds the original (unjittered) values of feature `j` in
/// ascending order; the implicit grid is `u_k = (k + 1/2) / n`. Columns whose
/// distinct-value count is at most `max(2, n/10)` are marked discrete and are
/// inverted by nearest order statistic rather than linear interpolation, so
/// their output alphabet matches the observed values exactly.
#[derive(Debug, Clone)]
pub struct CopulaTables {
    pub sorted: Vec<Vec<f64>>,
    pub n: usize,
    pub clip_eps: f64,
    pub discrete: Vec<bool>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Rank-based Gaussianization: per feature, ranks are computed after adding
/// an infinitesimal jitter (scale `1e-10 * column std`) to break ties, mapped
/// to `(r + 1/2) / n`, clipped to `[eps, 1 - eps]`, and sent through the
/// probit. Returns the Gaussianized matrix and the inversion tables.
pub fn copula_gaussianize<R: Rng + ?Sized>(
    x: &ArrayView2<'_, f64>,
    eps: f64,
    rng: &mut R,
) -> Result<(Array2<f64>, CopulaTables)> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::InsufficientSamples { n, needed: 2 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData("copula input".into()));
    }
    assert!(eps > 0.0 && eps < 0.5, "clip epsilon must be in (0, 0.5)");
    let normal = std_normal();
    let nf = n as f64;
    let discrete_cutoff = 2usize.max(n / 10);
    let mut z = Array2::<f64>::zeros((n, p));
    let mut sorted = Vec::with_capacity(p);
    let mut discrete = Vec::with_capacity(p);
    let mut jittered = vec![0.0f64; n];
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let std = var.sqrt();
        if std == 0.0 {
            log::warn!("copula_gaussianize: column {j} is constant; ranks will be random");
        }
        let scale = 1e-10 * if std > 0.0 { std } else { 1.0 };
        for i in 0..n {
            let noise: f64 = rng.sample(StandardNormal);
            jittered[i] = col[i] + scale * noise;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| jittered[a].partial_cmp(&jittered[b]).unwrap().then(a.cmp(&b)));
        for (rank, &i) in order.iter().enumerate() {
            let u = ((rank as f64 + 0.5) / nf).clamp(eps, 1.0 - eps);
            z[[i, j]] = normal.inverse_cdf(u);
        }
        let mut vals: Vec<f64> = col.to_vec();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct = 1usize;
        for k in 1..n {
            if vals[k] != vals[k - 1] {
                distinct += 1;
            }
        }
        discrete.push(distinct <= discrete_cutoff);
        sorted.push(vals);
    }
    Ok((
        z,
        CopulaTables {
            sorted,
            n,
            clip_eps: eps,
            discrete,
        },
    ))
}

/// Maps Gaussian-space knockoffs back to the original marginals through the
/// empirical quantile grid; values outside the grid clamp to the endpoints.
pub fn copula_invert(z_tilde: &ArrayView2<'_, f64>, tables: &CopulaTables) -> Result<Array2<f64>> {
    let (n_rows, p) = z_tilde.dim();
    if p != tables.sorted.len() {
        return Err(Error::DimensionMismatch(format!(
            "z_tilde has {p} columns but tables cover {}",
            tables.sorted.len()
        )));
    }
    let normal = std_normal();
    let n = tables.n;
    let nf = n as f64;
    let mut out = Array2::<f64>::zeros((n_rows, p));
    for j in 0..p {
        let vals = &tables.sorted[j];
        let discrete = tables.discrete[j];
        for i in 0..n_rows {
            let u = normal.cdf(z_tilde[[i, j]]);
            // Grid position: u_k = (k + 1/2) / n  =>  t = u * n - 1/2.
            let t = u * nf - 0.5;
            out[[i, j]] = if t <= 0.0 {
                vals[0]
            } else if t >= (n - 1) as f64 {
                vals[n - 1]
            } else if discrete {
                vals[t.round() as usize]
            } else {
                let k = t.floor() as usize;
                let frac = t - k as f64;
                vals[k] + frac * (vals[k + 1] - vals[k])
            };
        }
    }
    Ok(out)
}

/// Full Gaussian-copula knockoff pipeline: Gaussianize, center, estimate a
/// shrunk covariance, sample second-order knockoffs in z-space (restoring the
/// column means), and invert to the original marginals.
pub fn copula_knockoffs<R: Rng + ?Sized>(
    x: &ArrayView2<'_, f64>,
    extra_shrink: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if n <= p {
        log::warn!("copula_knockoffs: n = {n} <= p = {p}; covariance estimate will be weak");
    }
    let (z, tables) = copula_gaussianize(x, 1e-6, rng)?;
    let means = z.mean_axis(Axis(0)).unwrap();
    let mut zc = z;
    for mut row in zc.rows_mut() {
        row -= &means;
    }
    let (sigma_hat, _alpha) = linalg::ledoit_wolf(&zc.view(), extra_shrink)?;
    let model = build_gaussian_model(sigma_hat)?;
    let mut z_tilde = sample_gaussian_knockoffs(&zc.view(), &model, rng)?;
    for mut row in z_tilde.rows_mut() {
        row += &means;
    }
    copula_invert(&z_tilde.view(), &tables)
}

/// Fixed-X equi-correlated knockoffs for a design matrix with `n >= 2p`.
///
/// Columns are normalized to unit l2 norm, the Gram spectrum is taken from a
/// Jacobi eigendecomposition (small negative eigenvalues clipped), the
/// orthogonal completion is built by Gram-Schmidt on Gaussian draws, and the
/// result is rescaled to the original column norms.
pub fn fixedx_knockoffs<R: Rng + ?Sized>(
    x: &ArrayView2<'_, f64>,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if n < 2 * p {
        return Err(Error::InsufficientRows { n, needed: 2 * p });
    }
    let mut norms = Array1::<f64>::zeros(p);
    let mut zero_cols = Vec::new();
    for j in 0..p {
        let nrm = x.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm < 1e-10 {
            zero_cols.push(j);
        }
        norms[j] = nrm;
    }
    if !zero_cols.is_empty() {
        return Err(Error::RankDeficient { columns: zero_cols });
    }
    let mut xn = x.to_owned();
    for j in 0..p {
        xn.column_mut(j).mapv_inplace(|v| v / norms[j]);
    }
    let gram = SymMatrix::symmetrized(xn.t().dot(&xn))?;
    let (evals, evecs) = linalg::jacobi_eigen(&gram, 1e-12)?;
    let d2: Vec<f64> = evals.iter().map(|&v| v.max(0.0)).collect();
    let d: Vec<f64> = d2.iter().map(|&v| v.sqrt()).collect();
    let deficient: Vec<usize> = (0..p).filter(|&k| d[k] < 1e-10).collect();
    if !deficient.is_empty() {
        // Name the columns loading on the near-null directions.
        let mut cols = Vec::new();
        for &k in &deficient {
            let col = evecs.column(k);
            let max_load = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for j in 0..p {
                if col[j].abs() >= 0.5 * max_load {
                    cols.push(j);
                }
            }
        }
        cols.sort_unstable();
        cols.dedup();
        return Err(Error::RankDeficient { columns: cols });
    }

    // U = Xn V D^-1 has orthonormal columns spanning the column space.
    let mut u_mat = xn.dot(&evecs);
    for k in 0..p {
        u_mat.column_mut(k).mapv_inplace(|v| v / d[k]);
    }

    let lambda_min = d2[0];
    let s = (2.0 * lambda_min).min(1.0);

    // Randomized orthogonal completion of U.
    let mut u_perp = Array2::<f64>::zeros((n, p));
    for c in 0..p {
        let mut ok = false;
        for _attempt in 0..64 {
            let mut col = Array1::<f64>::zeros(n);
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            // Two Gram-Schmidt passes for orthogonality at working precision.
            for _ in 0..2 {
                for k in 0..p {
                    let proj = u_mat.column(k).dot(&col);
                    col.zip_mut_with(&u_mat.column(k), |v, &u| *v -= proj * u);
                }
                for k in 0..c {
                    let proj = u_perp.column(k).dot(&col);
                    col.zip_mut_with(&u_perp.column(k), |v, &u| *v -= proj * u);
                }
            }
            let nrm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > 1e-8 {
                col.mapv_inplace(|v| v / nrm);
                u_perp.column_mut(c).assign(&col);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::ConvergenceFailure(
                "orthogonal completion kept collapsing".into(),
            ));
        }
    }

    // X_tilde = Xn - s Xn G^-1 + U_perp diag(sqrt(2s - s^2/d^2)) V^T,
    // assembled as (U_perp diag(term) - s U D^-1) V^T + Xn.
    let mut mix = Array2::<f64>::zeros((n, p));
    for k in 0..p {
        let term = (2.0 * s - s * s / d2[k]).max(0.0).sqrt();
        let scale_u = s / d[k];
        let up = u_perp.column(k);
        let uc = u_mat.column(k);
        let mut dst = mix.column_mut(k);
        for i in 0..n {
            dst[i] = up[i] * term - uc[i] * scale_u;
        }
    }
    let mut x_tilde = mix.dot(&evecs.t()) + &xn;
    for j in 0..p {
        x_tilde.column_mut(j).mapv_inplace(|v| v * norms[j]);
    }
    Ok(x_tilde)
}

/// Knockoff-augmented design: original features, their knockoffs, and the
/// response. Feature `j` pairs with augmented column `j + p`.
#[derive(Debug, Clone)]
pub struct AugmentedDesign {
    pub x: Array2<f64>,
    pub x_tilde: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl AugmentedDesign {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Concatenated `[X, X_tilde]` matrix of shape `n x 2p`.
    pub fn augmented(&self) -> Array2<f64> {
        let (n, p) = self.x.dim();
        let mut out = Array2::<f64>::zeros((n, 2 * p));
        out.slice_mut(ndarray::s![.., 0..p]).assign(&self.x);
        out.slice_mut(ndarray::s![.., p..2 * p]).assign(&self.x_tilde);
        out
    }
}

/// Packages a design, its knockoffs, and the response after shape and
/// finiteness checks.
pub fn augment(x: Array2<f64>, x_tilde: Array2<f64>, y: Array1<f64>) -> Result<AugmentedDesign> {
    let (n, p) = x.dim();
    if p == 0 || x_tilde.dim() != (n, p) {
        return Err(Error::DimensionMismatch(format!(
            "x is {n}x{p} but x_tilde is {}x{}",
            x_tilde.nrows(),
            x_tilde.ncols()
        )));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries for {n} rows",
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite())
        || x_tilde.iter().any(|v| !v.is_finite())
        || y.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteData("augmented design".into()));
    }
    Ok(AugmentedDesign {
        x,
        x_tilde,
        y,
        feature_names: None,
    })
}

/// Empirical covariance helper used by the moment-matching checks.
pub fn empirical_cov(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows() as f64;
    let am = a.mean_axis(Axis(0)).unwrap();
    let bm = b.mean_axis(Axis(0)).unwrap();
    let ac = a.to_owned() - &am.view().insert_axis(Axis(0));
    let bc = b.to_owned() - &bm.view().insert_axis(Axis(0));
    ac.t().dot(&bc) / (n - 1.0)
}
