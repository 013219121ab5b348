//! Dense symmetric linear algebra kernels shared by knockoff construction
//! and calibration: jittered Cholesky, a cyclic Jacobi eigensolver, SPD
//! solves, and Ledoit-Wolf covariance shrinkage.
//!
//! Everything here is deterministic: reductions run in index-ascending order
//! and no internal parallelism is used, so identical inputs give bit-identical
//! outputs run to run.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Absolute tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense symmetric real matrix, validated at construction.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    /// Validates squareness, finiteness, and symmetry within [`SYMMETRY_TOL`].
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square and nonempty, got {r}x{c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("symmetric matrix entries".into()));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if (data[[i, j]] - data[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric {
                        max_abs: (data[[i, j]] - data[[j, i]]).abs(),
                    });
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds from a square matrix by averaging with its transpose.
    pub fn symmetrized(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "cannot symmetrize a {r}x{c} matrix"
            )));
        }
        let mut m = a;
        for i in 0..r {
            for j in (i + 1)..r {
                let v = 0.5 * (m[[i, j]] + m[[j, i]]);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        Self::new(m)
    }

    pub fn eye(p: usize) -> Self {
        Self {
            data: Array2::eye(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Lower-triangular Cholesky factor together with the diagonal jitter that
/// was needed to make the factorization succeed.
#[derive(Debug, Clone)]
pub struct CholFactor {
    pub lower: Array2<f64>,
    pub jitter_used: f64,
}

/// Plain lower Cholesky; `None` when a pivot is nonpositive or non-finite.
fn try_cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in j..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[j, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Cholesky factorization with a geometric jitter schedule.
///
/// Tries jitter 0 first, then `jitter0 * 10^k` for `k = 0..=9`. The first
/// value for which `m + jitter * I` factorizes is kept and reported in the
/// result.
pub fn cholesky_with_jitter(m: &SymMatrix, jitter0: f64) -> Result<CholFactor> {
    assert!(jitter0 >= 0.0, "jitter0 must be nonnegative");
    let n = m.dim();
    let mut last = 0.0;
    let mut schedule = vec![0.0];
    if jitter0 > 0.0 {
        let mut j = jitter0;
        for _ in 0..10 {
            schedule.push(j);
            j *= 10.0;
        }
    }
    for jitter in schedule {
        last = jitter;
        let a = if jitter == 0.0 {
            m.as_array().clone()
        } else {
            let mut a = m.as_array().clone();
            for i in 0..n {
                a[[i, i]] += jitter;
            }
            a
        };
        if let Some(lower) = try_cholesky(&a) {
            return Ok(CholFactor {
                lower,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::NotPositiveDefinite { jitter_last: last })
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching eigenvector columns.
/// Rotations sweep the strict upper triangle in row-major order until the
/// off-diagonal Frobenius norm falls below `tol * ||m||_F`; the sweep order
/// is fixed, so the output is deterministic for a given input.
pub fn jacobi_eigen(m: &SymMatrix, tol: f64) -> Result<(Array1<f64>, Array2<f64>)> {
    const MAX_SWEEPS: usize = 64;
    let n = m.dim();
    let mut a = m.as_array().clone();
    let mut v = Array2::<f64>::eye(n);
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = (tol.max(1e-15) * frob).max(f64::MIN_POSITIVE);

    let off_norm = |a: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[[i, j]] * a[[i, j]];
            }
        }
        s.sqrt()
    };

    let mut converged = frob == 0.0 || off_norm(&a) <= threshold;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a) <= threshold;
    }
    if !converged {
        return Err(Error::ConvergenceFailure(format!(
            "Jacobi eigensolver did not reach tol {tol:e} in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].partial_cmp(&a[[j, j]]).unwrap().then(i.cmp(&j)));
    let eigvals = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigvecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigvecs.column_mut(dst).assign(&v.column(src));
    }
    Ok((eigvals, eigvecs))
}

/// Smallest and largest eigenvalues of a symmetric matrix.
///
/// Backed by the full Jacobi decomposition in [`jacobi_eigen`]; accuracy is
/// governed by `tol` relative to the Frobenius norm of the input.
pub fn sym_eig_extremes(m: &SymMatrix, tol: f64) -> Result<(f64, f64)> {
    let (vals, _) = jacobi_eigen(m, tol)?;
    Ok((vals[0], vals[vals.len() - 1]))
}

fn forward_substitute(l: &Array2<f64>, b: &mut Array1<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

fn backward_substitute_transposed(l: &Array2<f64>, b: &mut Array1<f64>) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solves `(m + ridge * I) X = rhs` through a single Cholesky factorization.
pub fn solve_spd(m: &SymMatrix, rhs: &ArrayView2<'_, f64>, ridge: f64) -> Result<Array2<f64>> {
    let n = m.dim();
    if rhs.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd: matrix is {n}x{n} but rhs has {} rows",
            rhs.nrows()
        )));
    }
    let mut a = m.as_array().clone();
    if ridge != 0.0 {
        for i in 0..n {
            a[[i, i]] += ridge;
        }
    }
    let l = try_cholesky(&a).ok_or(Error::NotPositiveDefinite { jitter_last: ridge })?;
    let mut out = Array2::<f64>::zeros(rhs.dim());
    for j in 0..rhs.ncols() {
        let mut col = rhs.column(j).to_owned();
        forward_substitute(&l, &mut col);
        backward_substitute_transposed(&l, &mut col);
        out.column_mut(j).assign(&col);
    }
    Ok(out)
}

/// Ledoit-Wolf shrinkage toward the scaled identity, with an optional extra
/// shrinkage added on top of the plug-in coefficient.
///
/// Input columns are expected to be centered. Returns the shrunk covariance
/// `(1 - a') * S + a' * mu * I` (with `S = Zc^T Zc / (n-1)` and
/// `mu = tr(S)/p`) and the clipped coefficient `a'`.
pub fn ledoit_wolf(zc: &ArrayView2<'_, f64>, extra_shrink: f64) -> Result<(SymMatrix, f64)> {
    let (n, p) = zc.dim();
    if n < 2 {
        return Err(Error::InsufficientSamples { n, needed: 2 });
    }
    if p == 0 {
        return Err(Error::EmptyDataset);
    }
    let col_means = zc.mean_axis(Axis(0)).unwrap();
    if col_means.iter().any(|m| m.abs() > 1e-8) {
        log::warn!("ledoit_wolf: input columns are not centered (max |mean| = {:e})",
            col_means.iter().fold(0.0f64, |acc, m| acc.max(m.abs())));
    }
    let extra = extra_shrink.clamp(0.0, 1.0);
    let nf = n as f64;
    let pf = p as f64;

    let gram = zc.t().dot(zc);
    // Plug-in coefficient uses the 1/n covariance, per the published estimator.
    let s_n = &gram / nf;
    let mu_n = s_n.diag().sum() / pf;
    let mut d2 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let v = if i == j { s_n[[i, j]] - mu_n } else { s_n[[i, j]] };
            d2 += v * v;
        }
    }
    d2 /= pf;
    let s_n_frob2: f64 = s_n.iter().map(|v| v * v).sum();
    let sum_norm4: f64 = zc
        .rows()
        .into_iter()
        .map(|row| {
            let nrm2: f64 = row.iter().map(|v| v * v).sum();
            nrm2 * nrm2
        })
        .sum();
    let b2_bar = (sum_norm4 - nf * s_n_frob2) / (nf * nf * pf);
    let alpha_lw = if d2 <= f64::MIN_POSITIVE {
        0.0
    } else {
        (b2_bar.min(d2) / d2).clamp(0.0, 1.0)
    };
    let alpha_prime = (alpha_lw + extra).clamp(0.0, 1.0);

    let s_sample = &gram / (nf - 1.0);
    let mu = s_sample.diag().sum() / pf;
    let mut sigma = s_sample * (1.0 - alpha_prime);
    for i in 0..p {
        sigma[[i, i]] += alpha_prime * mu;
    }
    Ok((SymMatrix::symmetrized(sigma)?, alpha_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    }

    #[test]
    fn cholesky_identity_no_jitter() {
        let m = SymMatrix::eye(3);
        let f = cholesky_with_jitter(&m, 1e-10).unwrap();
        assert_eq!(f.jitter_used, 0.0);
        assert!(max_abs_diff(&f.lower, &Array2::eye(3)) < 1e-14);
    }

    #[test]
    fn cholesky_hand_2x2() {
        let m = SymMatrix::new(array![[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let f = cholesky_with_jitter(&m, 0.0).unwrap();
        assert_eq!(f.jitter_used, 0.0);
        assert_abs_diff_eq!(f.lower[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.lower[[1, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.lower[[1, 1]], 2.0f64.sqrt(), epsilon = 1e-12);
        assert_eq!(f.lower[[0, 1]], 0.0);
    }

    #[test]
    fn cholesky_rank_deficient_escalates() {
        let m = SymMatrix::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let f = cholesky_with_jitter(&m, 1e-8).unwrap();
        assert!(f.jitter_used > 0.0);
        let rebuilt = f.lower.dot(&f.lower.t());
        let mut target = m.as_array().clone();
        for i in 0..2 {
            target[[i, i]] += f.jitter_used;
        }
        assert!(max_abs_diff(&rebuilt, &target) <= 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = SymMatrix::new(array![[1.0, 0.0], [0.0, -1.0]]).unwrap();
        let err = cholesky_with_jitter(&m, 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &dim in &[2usize, 5, 20, 60, 200] {
            let mut b = Array2::<f64>::zeros((dim, dim));
            for v in b.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let mut spd = b.dot(&b.t());
            for i in 0..dim {
                spd[[i, i]] += dim as f64 * 0.1;
            }
            let m = SymMatrix::symmetrized(spd.clone()).unwrap();
            let f = cholesky_with_jitter(&m, 1e-10).unwrap();
            let rebuilt = f.lower.dot(&f.lower.t());
            let mut target = m.as_array().clone();
            for i in 0..dim {
                target[[i, i]] += f.jitter_used;
            }
            let scale = m.as_array().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(
                max_abs_diff(&rebuilt, &target) <= 1e-8 * scale,
                "dim {dim}: reconstruction too loose"
            );
        }
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let (lo, hi) = sym_eig_extremes(&SymMatrix::eye(6), 1e-9).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);

        let d = SymMatrix::new(Array2::from_diag(&array![0.1, 2.0, 5.0])).unwrap();
        let (lo, hi) = sym_eig_extremes(&d, 1e-9).unwrap();
        assert_abs_diff_eq!(lo, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_correlation_2x2() {
        let m = SymMatrix::new(array![[1.0, 0.6], [0.6, 1.0]]).unwrap();
        let (lo, hi) = sym_eig_extremes(&m, 1e-9).unwrap();
        assert_abs_diff_eq!(lo, 0.4, epsilon = 1e-10);
        assert_abs_diff_eq!(hi, 1.6, epsilon = 1e-10);
    }

    /// Characteristic-polynomial oracle for 2x2 symmetric matrices.
    fn eig2_oracle(a: f64, b: f64, d: f64) -> (f64, f64) {
        let tr = a + d;
        let det = a * d - b * b;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        ((tr - disc) / 2.0, (tr + disc) / 2.0)
    }

    /// Characteristic-polynomial oracle for 3x3 symmetric matrices
    /// (trigonometric solution of the depressed cubic).
    fn eig3_oracle(m: &Array2<f64>) -> (f64, f64) {
        let p1 = m[[0, 1]].powi(2) + m[[0, 2]].powi(2) + m[[1, 2]].powi(2);
        let q = (m[[0, 0]] + m[[1, 1]] + m[[2, 2]]) / 3.0;
        let p2 = (m[[0, 0]] - q).powi(2) + (m[[1, 1]] - q).powi(2) + (m[[2, 2]] - q).powi(2)
            + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return (q, q);
        }
        let mut bmat = m.clone();
        for i in 0..3 {
            bmat[[i, i]] -= q;
        }
        bmat /= p;
        let det_b = bmat[[0, 0]] * (bmat[[1, 1]] * bmat[[2, 2]] - bmat[[1, 2]] * bmat[[2, 1]])
            - bmat[[0, 1]] * (bmat[[1, 0]] * bmat[[2, 2]] - bmat[[1, 2]] * bmat[[2, 0]])
            + bmat[[0, 2]] * (bmat[[1, 0]] * bmat[[2, 1]] - bmat[[1, 1]] * bmat[[2, 0]]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        (lo, hi)
    }

    #[test]
    fn eig_matches_characteristic_polynomial_battery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let d: f64 = rng.sample(StandardNormal);
            let m = SymMatrix::new(array![[a, b], [b, d]]).unwrap();
            let (lo, hi) = sym_eig_extremes(&m, 1e-12).unwrap();
            let (olo, ohi) = eig2_oracle(a, b, d);
            assert_abs_diff_eq!(lo, olo, epsilon = 1e-8);
            assert_abs_diff_eq!(hi, ohi, epsilon = 1e-8);
        }
        for _ in 0..200 {
            let mut m = Array2::<f64>::zeros((3, 3));
            for i in 0..3 {
                for j in 0..=i {
                    let v: f64 = rng.sample(StandardNormal);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let sym = SymMatrix::new(m.clone()).unwrap();
            let (lo, hi) = sym_eig_extremes(&sym, 1e-12).unwrap();
            let (olo, ohi) = eig3_oracle(&m);
            assert_abs_diff_eq!(lo, olo, epsilon = 1e-8);
            assert_abs_diff_eq!(hi, ohi, epsilon = 1e-8);
        }
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let rhs = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let x = solve_spd(&SymMatrix::eye(3), &rhs.view(), 0.0).unwrap();
        assert!(max_abs_diff(&x, &rhs) < 1e-14);

        let m = SymMatrix::new(array![[2.0, 0.0], [0.0, 4.0]]).unwrap();
        let rhs = array![[2.0], [8.0]];
        let x = solve_spd(&m, &rhs.view(), 0.0).unwrap();
        assert_abs_diff_eq!(x[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[[1, 0]], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 5;
        let mut b = Array2::<f64>::zeros((dim, dim));
        for v in b.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut spd = b.dot(&b.t());
        for i in 0..dim {
            spd[[i, i]] += 1.0;
        }
        let m = SymMatrix::symmetrized(spd).unwrap();
        let mut v = Array2::<f64>::zeros((dim, 1));
        for x in v.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let rhs = m.as_array().dot(&v);
        let sol = solve_spd(&m, &rhs.view(), 0.0).unwrap();
        assert!(max_abs_diff(&sol, &v) < 1e-8);
    }

    #[test]
    fn solve_residual_on_conditioned_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for &dim in &[3usize, 10, 40] {
            let mut b = Array2::<f64>::zeros((dim, dim));
            for v in b.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let mut spd = b.dot(&b.t());
            for i in 0..dim {
                spd[[i, i]] += 0.5;
            }
            let m = SymMatrix::symmetrized(spd).unwrap();
            let mut rhs = Array2::<f64>::zeros((dim, 2));
            for v in rhs.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = solve_spd(&m, &rhs.view(), 0.0).unwrap();
            let resid = m.as_array().dot(&x) - &rhs;
            let rhs_norm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let res_norm: f64 = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res_norm <= 1e-8 * rhs_norm.max(1.0));
        }
    }

    #[test]
    fn ledoit_wolf_full_shrink_is_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, p) = (50, 4);
        let mut z = Array2::<f64>::zeros((n, p));
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let means = z.mean_axis(Axis(0)).unwrap();
        for mut row in z.rows_mut() {
            row -= &means;
        }
        let (sigma, alpha) = ledoit_wolf(&z.view(), 1.0).unwrap();
        assert_eq!(alpha, 1.0);
        let mu = sigma.as_array().diag().sum() / p as f64;
        let target = Array2::eye(p) * mu;
        assert!(max_abs_diff(sigma.as_array(), &target) < 1e-12);
    }

    #[test]
    fn ledoit_wolf_monte_carlo_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, p) = (10_000, 5);
        let mut z = Array2::<f64>::zeros((n, p));
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let means = z.mean_axis(Axis(0)).unwrap();
        for mut row in z.rows_mut() {
            row -= &means;
        }
        let (sigma, _) = ledoit_wolf(&z.view(), 0.0).unwrap();
        let target = Array2::eye(p);
        assert!(max_abs_diff(sigma.as_array(), &target) < 0.1);
    }

    #[test]
    fn ledoit_wolf_scalar_case() {
        let z = array![[1.0], [-1.0], [2.0], [-2.0]];
        let (sigma, _) = ledoit_wolf(&z.view(), 0.37).unwrap();
        let expected = (1.0 + 1.0 + 4.0 + 4.0) / 3.0;
        assert_abs_diff_eq!(sigma.as_array()[[0, 0]], expected, epsilon = 1e-12);
    }

    #[test]
    fn ledoit_wolf_insufficient_samples() {
        let z = array![[1.0, 2.0]];
        assert!(matches!(
            ledoit_wolf(&z.view(), 0.0),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn ledoit_wolf_output_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..20 {
            let n = 3 + (trial % 10);
            let p = 2 + (trial % 6);
            let mut z = Array2::<f64>::zeros((n, p));
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let means = z.mean_axis(Axis(0)).unwrap();
            for mut row in z.rows_mut() {
                row -= &means;
            }
            let (sigma, _) = ledoit_wolf(&z.view(), 0.0).unwrap();
            let (lo, _) = sym_eig_extremes(&sigma, 1e-10).unwrap();
            assert!(lo >= -1e-10, "min eigenvalue {lo} below tolerance");
        }
    }
}
