//! Comparator importance statistics: lasso-path entry time, input-gradient
//! sensitivity (mean absolute local derivative), and the single-shot
//! group-lasso ablation of the block-stochastic trainer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grip::{self, BssConfig, PersistenceScores, Schedule};
use crate::knockoffs::AugmentedDesign;
use crate::nn::{self, AdamState, NetConfig, NetParams};

/// Lasso path settings. When `lambda_grid` is unset, a log-spaced descending
/// grid of `grid_size` points is built from `lambda_max = max_j |X_j^T y| / n`
/// down to `grid_ratio * lambda_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoPathConfig {
    pub lambda_grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LassoPathConfig {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            grid_size: 100,
            grid_ratio: 1e-4,
            max_iters: 5000,
            tol: 1e-7,
        }
    }
}

/// Input-gradient importance settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaldConfig {
    /// Exponent applied to each per-sample absolute derivative.
    pub exponent_r: f64,
    /// Number of evaluation minibatches the gradients are averaged over.
    pub eval_batches: usize,
    /// Rows per minibatch for both training and evaluation.
    pub batch_size: usize,
}

impl Default for MaldConfig {
    fn default() -> Self {
        Self {
            exponent_r: 1.0,
            eval_batches: 8,
            batch_size: 256,
        }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// One lasso fit at a fixed lambda by cyclic coordinate descent on the
/// objective `(1/2n) ||y - X beta||^2 + lambda ||beta||_1`.
///
/// `xt` holds the design transposed (row j = column j of X, contiguous).
/// Full passes over `order` alternate with cheaper passes over the current
/// active set until a full pass neither activates a coordinate nor moves one
/// by `tol` or more. Returns whether that happened within `max_iters` passes.
fn lasso_fit_at(
    xt: &Array2<f64>,
    col_sq_over_n: &[f64],
    beta: &mut Array1<f64>,
    residual: &mut [f64],
    lambda: f64,
    order: &[usize],
    max_iters: usize,
    tol: f64,
) -> bool {
    let n = xt.ncols() as f64;
    let xs = xt.as_slice().expect("xt is standard layout");
    let len = residual.len();

    let mut update = |j: usize, beta: &mut Array1<f64>, residual: &mut [f64]| -> f64 {
        let denom = col_sq_over_n[j];
        if denom == 0.0 {
            return 0.0;
        }
        let col = &xs[j * len..(j + 1) * len];
        let mut corr = 0.0;
        for i in 0..len {
            corr += col[i] * residual[i];
        }
        corr /= n;
        let z = corr + denom * beta[j];
        let new = soft_threshold(z, lambda) / denom;
        let delta = new - beta[j];
        if delta != 0.0 {
            for i in 0..len {
                residual[i] -= delta * col[i];
            }
            beta[j] = new;
        }
        delta.abs()
    };

    let mut iters = 0usize;
    while iters < max_iters {
        // Full pass: may activate new coordinates.
        iters += 1;
        let mut max_delta = 0.0f64;
        for &j in order {
            max_delta = max_delta.max(update(j, beta, residual));
        }
        if max_delta < tol {
            return true;
        }
        // Active-set passes until the current support settles.
        let active: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&j| beta[j] != 0.0)
            .collect();
        while iters < max_iters {
            iters += 1;
            let mut inner_delta = 0.0f64;
            for &j in &active {
                inner_delta = inner_delta.max(update(j, beta, residual));
            }
            if inner_delta < tol {
                break;
            }
        }
    }
    false
}

fn default_grid(x: &ArrayView2<'_, f64>, y: &ArrayView1<'_, f64>, cfg: &LassoPathConfig) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut lambda_max = 0.0f64;
    for j in 0..x.ncols() {
        lambda_max = lambda_max.max((x.column(j).dot(y) / n).abs());
    }
    if lambda_max == 0.0 {
        lambda_max = 1.0;
    }
    let lo = (cfg.grid_ratio * lambda_max).ln();
    let hi = lambda_max.ln();
    let k = cfg.grid_size.max(2);
    (0..k)
        .map(|i| (hi + (lo - hi) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

fn lasso_entry_scores_with_order(
    data: &AugmentedDesign,
    cfg: &LassoPathConfig,
    order: &[usize],
) -> Result<Array1<f64>> {
    let aug = data.augmented();
    let x = aug.view();
    let y = data.y.view();
    let (n, dim) = x.dim();
    if n == 0 || dim == 0 {
        return Err(Error::EmptyDataset);
    }
    let nf = n as f64;
    let max_mean = (0..dim)
        .map(|j| (x.column(j).sum() / nf).abs())
        .fold(0.0f64, f64::max);
    if max_mean > 0.1 {
        log::warn!("lasso_entry_scores: columns look uncentered (max |mean| = {max_mean:.3})");
    }

    let grid = match &cfg.lambda_grid {
        Some(g) => {
            if g.is_empty() || g.windows(2).any(|w| w[0] <= w[1]) || g.iter().any(|&v| v <= 0.0) {
                return Err(Error::DimensionMismatch(
                    "lambda grid must be strictly descending and positive".into(),
                ));
            }
            g.clone()
        }
        None => default_grid(&x, &y, cfg),
    };

    let col_sq_over_n: Vec<f64> = (0..dim)
        .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    let xt = x.t().as_standard_layout().to_owned();
    let mut beta = Array1::<f64>::zeros(dim);
    let mut residual = y.to_vec();
    let mut scores = Array1::<f64>::zeros(dim);
    for &lambda in &grid {
        let converged = lasso_fit_at(
            &xt,
            &col_sq_over_n,
            &mut beta,
            &mut residual,
            lambda,
            order,
            cfg.max_iters,
            cfg.tol,
        );
        if !converged {
            log::warn!(
                "lasso_entry_scores: coordinate descent hit max_iters {} at lambda {lambda:e}",
                cfg.max_iters
            );
        }
        for j in 0..dim {
            if scores[j] == 0.0 && beta[j].abs() > 1e-12 {
                scores[j] = lambda;
            }
        }
    }
    Ok(scores)
}

/// Largest grid lambda at which each augmented coordinate becomes active
/// along the lasso path (0 when never active).
pub fn lasso_entry_scores(data: &AugmentedDesign, cfg: &LassoPathConfig) -> Result<Array1<f64>> {
    let dim = 2 * data.p();
    let order: Vec<usize> = (0..dim).collect();
    lasso_entry_scores_with_order(data, cfg, &order)
}

/// Trains the MLP without any sparsity pressure (`lambda = 0`, `gamma = 0`)
/// from the given initial parameters, then averages `|df/dx_j|^r` over
/// evaluation minibatches.
pub fn mald_scores_with_init<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    net: &NetConfig,
    params0: NetParams,
    train_steps: usize,
    cfg: &MaldConfig,
    rng: &mut R,
) -> Result<Array1<f64>> {
    net.validate()?;
    let dim = 2 * data.p();
    if net.input_dim != dim {
        return Err(Error::DimensionMismatch(format!(
            "net input_dim {} but augmented design has {dim} columns",
            net.input_dim
        )));
    }
    if !(cfg.exponent_r > 0.0) || cfg.eval_batches == 0 || cfg.batch_size == 0 {
        return Err(Error::DimensionMismatch(
            "mald needs positive exponent, eval_batches, batch_size".into(),
        ));
    }
    let aug = data.augmented();
    let n = aug.nrows();
    let bare = NetConfig {
        deep_l2: 0.0,
        ..net.clone()
    };
    let mut params = params0;
    let mut state = AdamState::new(&params);
    for _ in 0..train_steps {
        let idx = draw_batch(n, cfg.batch_size, rng);
        let xb = aug.select(Axis(0), &idx);
        let yb = data.y.select(Axis(0), &idx);
        let (_, mut grads) = nn::loss_and_grads(&params, &xb.view(), &yb.view(), 0.0, 1.0, &bare)?;
        if let Some(max_norm) = bare.clip_max_norm {
            nn::clip_grads(&mut grads, max_norm);
        }
        nn::adam_step(&mut params, &mut state, &grads, bare.learning_rate);
    }

    let mut acc = Array1::<f64>::zeros(dim);
    let mut rows = 0usize;
    for _ in 0..cfg.eval_batches {
        let idx = draw_batch(n, cfg.batch_size, rng);
        let xb = aug.select(Axis(0), &idx);
        let g = nn::input_grads(&params, &xb.view())?;
        for row in g.rows() {
            for j in 0..dim {
                acc[j] += row[j].abs().powf(cfg.exponent_r);
            }
        }
        rows += idx.len();
    }
    Ok(acc / rows as f64)
}

/// As [`mald_scores_with_init`] with a fresh He initialization from the RNG.
pub fn mald_scores<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    net: &NetConfig,
    train_steps: usize,
    cfg: &MaldConfig,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let params0 = nn::init_params(net, rng)?;
    mald_scores_with_init(data, net, params0, train_steps, cfg, rng)
}

fn draw_batch<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..batch {
        let j = i + rng.random_range(0..n - i);
        pool.swap(i, j);
    }
    pool.truncate(batch);
    pool
}

/// Single-shot group lasso: the block trainer pinned at
/// `(sqrt(lambda_min * lambda_max), a = 1)`, snapshotting every block.
pub fn single_shot_group_lasso<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    cfg: &BssConfig,
    rng: &mut R,
) -> Result<PersistenceScores> {
    let mut fixed = cfg.clone();
    fixed.prior.schedule = Schedule::Fixed;
    grip::bss_train(data, &fixed, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoffs::augment;
    use crate::nn::{Activation, LossKind};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Random matrix with orthonormal columns via Gram-Schmidt.
    fn orthonormal_design(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::<f64>::zeros((n, p));
        for c in 0..p {
            let mut col = Array1::<f64>::zeros(n);
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for k in 0..c {
                let proj = x.column(k).dot(&col);
                let prev = x.column(k).to_owned();
                col.zip_mut_with(&prev, |v, &u| *v -= proj * u);
            }
            let nrm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.mapv_inplace(|v| v / nrm);
            x.column_mut(c).assign(&col);
        }
        x
    }

    fn design_of(x: Array2<f64>, y: Array1<f64>) -> AugmentedDesign {
        let p = x.ncols() / 2;
        let x_main = x.slice(ndarray::s![.., 0..p]).to_owned();
        let x_ko = x.slice(ndarray::s![.., p..2 * p]).to_owned();
        augment(x_main, x_ko, y).unwrap()
    }

    #[test]
    fn lasso_orthonormal_entry_oracle() {
        let (n, dim) = (64, 8);
        let x = orthonormal_design(n, dim, 1);
        let beta = array![2.0, -1.5, 1.0, -0.7, 0.5, -0.3, 0.2, -0.1];
        let y = x.dot(&beta);
        let data = design_of(x.clone(), y.clone());
        let scores = lasso_entry_scores(&data, &LassoPathConfig::default()).unwrap();

        // Entry order must equal descending |X_j^T y| = |beta_j|.
        let mut by_score: Vec<usize> = (0..dim).collect();
        by_score.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let mut by_truth: Vec<usize> = (0..dim).collect();
        by_truth.sort_by(|&a, &b| beta[b].abs().partial_cmp(&beta[a].abs()).unwrap());
        assert_eq!(by_score, by_truth);

        // Entry values within one grid step of |X_j^T y| / n.
        let step = (1e-4f64).powf(-1.0 / 99.0); // adjacent grid ratio
        for j in 0..dim {
            let target = beta[j].abs() / n as f64;
            assert!(scores[j] <= target * 1.0000001);
            assert!(scores[j] >= target / (step * step), "entry {j} too late");
        }
    }

    #[test]
    fn lasso_pure_noise_bounded_by_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, dim) = (200, 6);
        let mut x = Array2::<f64>::zeros((n, dim));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut y = Array1::<f64>::zeros(n);
        for v in y.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let lambda_max = (0..dim)
            .map(|j| (x.column(j).dot(&y) / n as f64).abs())
            .fold(0.0f64, f64::max);
        let data = design_of(x, y);
        let scores = lasso_entry_scores(&data, &LassoPathConfig::default()).unwrap();
        assert!(scores.iter().all(|&s| s <= lambda_max * 1.0000001));
    }

    #[test]
    fn lasso_kkt_at_final_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, dim) = (120, 8);
        let mut x = Array2::<f64>::zeros((n, dim));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let beta_true = array![1.0, 0.0, -0.8, 0.0, 0.5, 0.0, 0.0, 0.0];
        let mut y = x.dot(&beta_true);
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += 0.1 * e;
        }
        let lambda = 0.05;
        let nf = n as f64;
        let col_sq: Vec<f64> = (0..dim)
            .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>() / nf)
            .collect();
        let xt = x.t().as_standard_layout().to_owned();
        let mut beta = Array1::<f64>::zeros(dim);
        let mut resid = y.to_vec();
        let order: Vec<usize> = (0..dim).collect();
        let ok = lasso_fit_at(&xt, &col_sq, &mut beta, &mut resid, lambda, &order, 5000, 1e-10);
        assert!(ok);
        let resid = Array1::from_vec(resid);
        for j in 0..dim {
            let corr = x.column(j).dot(&resid) / nf;
            if beta[j].abs() > 1e-12 {
                assert_abs_diff_eq!(corr, lambda * beta[j].signum(), epsilon = 1e-6);
            } else {
                assert!(corr.abs() <= lambda + 1e-6);
            }
        }
    }

    #[test]
    fn lasso_duplicated_column_tie_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100;
        let mut base = Array1::<f64>::zeros(n);
        for v in base.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut other = Array1::<f64>::zeros(n);
        for v in other.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut x = Array2::<f64>::zeros((n, 4));
        x.column_mut(0).assign(&base);
        x.column_mut(1).assign(&other);
        x.column_mut(2).assign(&base); // duplicate as its own knockoff
        let mut tail = Array1::<f64>::zeros(n);
        for v in tail.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        x.column_mut(3).assign(&tail);
        let y = &base * 2.0;
        let data = design_of(x, y);
        let scores = lasso_entry_scores(&data, &LassoPathConfig::default()).unwrap();
        // The duplicated pair (0, 2) resolves by visit order: exactly one of
        // the two carries the early entry.
        assert!(scores[0] > 0.0);
        assert!(scores[0] > scores[2]);
    }

    fn mald_net(input_dim: usize) -> NetConfig {
        NetConfig {
            input_dim,
            depth: 1,
            width: 4,
            activation: Activation::Relu,
            loss_kind: LossKind::SquaredError,
            learning_rate: 0.0,
            deep_l2: 0.0,
            smoothing_eps: 1e-8,
            clip_max_norm: None,
        }
    }

    #[test]
    fn mald_linear_hand_example() {
        // f(x) = 3 x1 - 2 x2 on an always-active affine region.
        let params = NetParams {
            w0: array![[3.0, -2.0]],
            b0: array![50.0],
            deep: vec![(array![[1.0]], array![0.0])],
            head_w: array![1.0],
            head_b: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Array2::<f64>::zeros((40, 1));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut xt = Array2::<f64>::zeros((40, 1));
        for v in xt.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let y = Array1::zeros(40);
        let data = augment(x, xt, y).unwrap();
        let net = NetConfig {
            width: 1,
            ..mald_net(2)
        };
        let cfg = MaldConfig {
            batch_size: 16,
            eval_batches: 3,
            ..MaldConfig::default()
        };
        let scores =
            mald_scores_with_init(&data, &net, params.clone(), 0, &cfg, &mut rng).unwrap();
        assert_abs_diff_eq!(scores[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores[1], 2.0, epsilon = 1e-12);

        // r = 2 squares each per-sample term.
        let cfg2 = MaldConfig {
            exponent_r: 2.0,
            batch_size: 16,
            eval_batches: 3,
        };
        let scores2 =
            mald_scores_with_init(&data, &net, params, 0, &cfg2, &mut ChaCha8Rng::seed_from_u64(6))
                .unwrap();
        assert_abs_diff_eq!(scores2[0], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores2[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn mald_zero_gate_column_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = mald_net(4);
        let mut params = nn::init_params(&net, &mut rng).unwrap();
        for r in 0..params.w0.nrows() {
            params.w0[[r, 2]] = 0.0;
        }
        let mut x = Array2::<f64>::zeros((30, 2));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut xt = Array2::<f64>::zeros((30, 2));
        for v in xt.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let data = augment(x, xt, Array1::zeros(30)).unwrap();
        let cfg = MaldConfig {
            batch_size: 10,
            eval_batches: 2,
            ..MaldConfig::default()
        };
        let scores = mald_scores_with_init(&data, &net, params, 0, &cfg, &mut rng).unwrap();
        assert_eq!(scores[2], 0.0);
        assert!(scores.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_shot_uses_fixed_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 2;
        let mut x = Array2::<f64>::zeros((40, p));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut xt = Array2::<f64>::zeros((40, p));
        for v in xt.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let y = Array1::from_iter((0..40).map(|i| x[[i, 0]]));
        let data = augment(x, xt, y).unwrap();
        let cfg = BssConfig {
            total_steps: 60,
            block_size: 20,
            warmup_steps: 0,
            batch_size: 20,
            prior: crate::grip::RegularizationPrior {
                lambda_min: 1e-3,
                lambda_max: 4e-2,
                a_min: 0.1,
                schedule: Schedule::TwoDBlock,
            },
            net: mald_net(2 * p),
            ensemble_k: 1,
        };
        let scores = single_shot_group_lasso(&data, &cfg, &mut rng).unwrap();
        assert_eq!(scores.snapshots_used, 3);
        let lam_fix = (1e-3f64 * 4e-2).sqrt();
        for &(l, a) in &scores.regimes {
            assert_abs_diff_eq!(l, lam_fix, epsilon = 1e-15);
            assert_eq!(a, 1.0);
        }
        assert_abs_diff_eq!(lam_fix, 6.32e-3, epsilon = 1e-4);
    }
}
