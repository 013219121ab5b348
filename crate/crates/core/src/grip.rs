//! Block-stochastic sampling over the regularization surface.
//!
//! A single training run is partitioned into blocks of `M` optimizer steps;
//! each block draws a fresh `(lambda, a)` regime from the prior, and the
//! first-layer group norms recorded at block ends are averaged into
//! persistence scores. Two calibrations pick the lambda range (by gradient
//! ratios) and the block size (by watching group-norm settling).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoffs::AugmentedDesign;
use crate::nn::{self, AdamState, NetConfig, NetParams};

/// How `(lambda, a)` are drawn at each block boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Lambda log-uniform and `a` uniform, redrawn per block (the default).
    TwoDBlock,
    /// Lambda log-uniform per block, `a` fixed at 1.
    OneDBlockLambda,
    /// `a` uniform per block, lambda fixed at the geometric mean.
    OneDBlockA,
    /// Constant `(geometric mean, 1)`; snapshots still taken every `M` steps.
    Fixed,
}

/// Prior over the regularization surface
/// `[lambda_min, lambda_max] x [a_min, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularizationPrior {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub a_min: f64,
    pub schedule: Schedule,
}

impl RegularizationPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0)
            || !(self.lambda_max >= self.lambda_min)
            || !(self.a_min > 0.0 && self.a_min <= 1.0)
        {
            return Err(Error::DimensionMismatch(
                "prior needs 0 < lambda_min <= lambda_max and a_min in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn lambda_fix(&self) -> f64 {
        (self.lambda_min * self.lambda_max).sqrt()
    }
}

/// Configuration for one block-stochastic training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BssConfig {
    /// Total regularized steps `T`; the run executes `B = floor(T/M)` blocks.
    pub total_steps: usize,
    /// Steps per block `M`.
    pub block_size: usize,
    /// Unregularized steps before the first block; contribute no snapshots.
    pub warmup_steps: usize,
    /// Minibatch rows; values at or above `n` train full-batch.
    pub batch_size: usize,
    pub prior: RegularizationPrior,
    pub net: NetConfig,
    /// Number of runs the step budget is split across when ensembling.
    pub ensemble_k: usize,
}

impl BssConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.net.validate()?;
        if self.block_size == 0 || self.total_steps < self.block_size {
            return Err(Error::DimensionMismatch(
                "need total_steps >= block_size >= 1".into(),
            ));
        }
        if self.batch_size == 0 || self.ensemble_k == 0 {
            return Err(Error::DimensionMismatch(
                "batch_size and ensemble_k must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Averaged block-end group norms, one entry per augmented coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceScores {
    pub s_hat: Array1<f64>,
    pub snapshots_used: usize,
    pub regimes: Vec<(f64, f64)>,
}

/// Per-block training diagnostics (emitted when requested).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockDiagnostic {
    pub block: usize,
    pub lambda: f64,
    pub a: f64,
    pub loss: f64,
    /// `lambda * ||grad_W penalty||_F / ||grad_W pred loss||_F` at block end.
    pub grad_ratio: f64,
}

/// Draws one `(lambda, a)` regime. Lambda is log-uniform, `a` uniform; the
/// one-dimensional and fixed schedules pin the other coordinate at `a = 1`
/// or the geometric-mean lambda.
pub fn sample_regime<R: Rng + ?Sized>(prior: &RegularizationPrior, rng: &mut R) -> (f64, f64) {
    let log_lambda = |rng: &mut R| {
        let lo = prior.lambda_min.ln();
        let hi = prior.lambda_max.ln();
        let u: f64 = rng.random();
        (lo + u * (hi - lo)).exp()
    };
    let uniform_a = |rng: &mut R| {
        let u: f64 = rng.random();
        prior.a_min + u * (1.0 - prior.a_min)
    };
    match prior.schedule {
        Schedule::TwoDBlock => {
            let l = log_lambda(rng);
            let a = uniform_a(rng);
            (l, a)
        }
        Schedule::OneDBlockLambda => (log_lambda(rng), 1.0),
        Schedule::OneDBlockA => (prior.lambda_fix(), uniform_a(rng)),
        Schedule::Fixed => (prior.lambda_fix(), 1.0),
    }
}

/// Samples `batch` distinct row indices (all rows, in order, when the batch
/// covers the dataset).
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

struct Trainer<'a> {
    aug: &'a Array2<f64>,
    y: &'a Array1<f64>,
    cfg: &'a BssConfig,
}

impl Trainer<'_> {
    fn step<R: Rng + ?Sized>(
        &self,
        params: &mut NetParams,
        state: &mut AdamState,
        lambda: f64,
        a: f64,
        net_cfg: &NetConfig,
        rng: &mut R,
    ) -> Result<f64> {
        let idx = draw_batch(self.aug.nrows(), self.cfg.batch_size, rng);
        let xb = self.aug.select(Axis(0), &idx);
        let yb = self.y.select(Axis(0), &idx);
        let (loss, mut grads) =
            nn::loss_and_grads(params, &xb.view(), &yb.view(), lambda, a, net_cfg)?;
        if let Some(max_norm) = net_cfg.clip_max_norm {
            nn::clip_grads(&mut grads, max_norm);
        }
        nn::adam_step(params, state, &grads, net_cfg.learning_rate);
        Ok(loss)
    }
}

fn unregularized(net: &NetConfig) -> NetConfig {
    NetConfig {
        deep_l2: 0.0,
        ..net.clone()
    }
}

/// Trains with block-stochastic regularization starting from the given
/// initial parameters; the RNG drives minibatch selection and regime draws.
pub fn bss_train_with_init<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    cfg: &BssConfig,
    params0: NetParams,
    rng: &mut R,
) -> Result<PersistenceScores> {
    Ok(bss_run(data, cfg, params0, rng, false)?.0)
}

/// As [`bss_train_with_init`] but also returns per-block diagnostics.
pub fn bss_train_with_diagnostics<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    cfg: &BssConfig,
    params0: NetParams,
    rng: &mut R,
) -> Result<(PersistenceScores, Vec<BlockDiagnostic>)> {
    bss_run(data, cfg, params0, rng, true)
}

/// Block-stochastic training from a fresh initialization drawn from `rng`.
pub fn bss_train<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    cfg: &BssConfig,
    rng: &mut R,
) -> Result<PersistenceScores> {
    cfg.validate()?;
    let params0 = nn::init_params(&cfg.net, rng)?;
    bss_train_with_init(data, cfg, params0, rng)
}

fn bss_run<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    cfg: &BssConfig,
    params0: NetParams,
    rng: &mut R,
    want_diagnostics: bool,
) -> Result<(PersistenceScores, Vec<BlockDiagnostic>)> {
    cfg.validate()?;
    let two_p = 2 * data.p();
    if cfg.net.input_dim != two_p {
        return Err(Error::DimensionMismatch(format!(
            "net input_dim {} but augmented design has {two_p} columns",
            cfg.net.input_dim
        )));
    }
    let aug = data.augmented();
    let trainer = Trainer {
        aug: &aug,
        y: &data.y,
        cfg,
    };
    let mut params = params0;
    let mut state = AdamState::new(&params);

    let warm_cfg = unregularized(&cfg.net);
    for step in 0..cfg.warmup_steps {
        trainer
            .step(&mut params, &mut state, 0.0, 1.0, &warm_cfg, rng)
            .map_err(|e| wrap_nonfinite(e, 0, step, 0.0, 1.0))?;
    }

    let blocks = cfg.total_steps / cfg.block_size;
    let mut sum = Array1::<f64>::zeros(two_p);
    let mut regimes = Vec::with_capacity(blocks);
    let mut diagnostics = Vec::new();
    for b in 0..blocks {
        let (lambda, a) = sample_regime(&cfg.prior, rng);
        let mut last_loss = f64::NAN;
        for step in 0..cfg.block_size {
            if want_diagnostics && step == cfg.block_size - 1 {
                let idx = draw_batch_peek(&aug, cfg.batch_size, rng);
                let xb = aug.select(Axis(0), &idx);
                let yb = data.y.select(Axis(0), &idx);
                let (loss, mut grads) =
                    nn::loss_and_grads(&params, &xb.view(), &yb.view(), lambda, a, &cfg.net)
                        .map_err(|e| wrap_nonfinite(e, b + 1, step, lambda, a))?;
                if let Some(max_norm) = cfg.net.clip_max_norm {
                    nn::clip_grads(&mut grads, max_norm);
                }
                let ratio = regularization_ratio(&params, &xb.view(), &yb.view(), lambda, a, &cfg.net);
                nn::adam_step(&mut params, &mut state, &grads, cfg.net.learning_rate);
                last_loss = loss;
                diagnostics.push(BlockDiagnostic {
                    block: b + 1,
                    lambda,
                    a,
                    loss: last_loss,
                    grad_ratio: ratio,
                });
            } else {
                last_loss = trainer
                    .step(&mut params, &mut state, lambda, a, &cfg.net, rng)
                    .map_err(|e| wrap_nonfinite(e, b + 1, step, lambda, a))?;
            }
        }
        let _ = last_loss;
        let norms = nn::group_norms(&params);
        sum += &norms;
        regimes.push((lambda, a));
    }
    let s_hat = sum / blocks as f64;
    if s_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss("persistence scores".into()));
    }
    Ok((
        PersistenceScores {
            s_hat,
            snapshots_used: blocks,
            regimes,
        },
        diagnostics,
    ))
}

/// Batch draw used on diagnostic steps; identical consumption of the stream
/// as the regular path so diagnostics never perturb the trajectory.
fn draw_batch_peek<R: Rng + ?Sized>(aug: &Array2<f64>, batch: usize, rng: &mut R) -> Vec<usize> {
    draw_batch(aug.nrows(), batch, rng)
}

fn wrap_nonfinite(e: Error, block: usize, step: usize, lambda: f64, a: f64) -> Error {
    match e {
        Error::NonFiniteLoss(msg) => Error::NonFiniteLoss(format!(
            "block {block}, step {step}, lambda={lambda:e}, a={a}: {msg}"
        )),
        other => other,
    }
}

/// Frobenius norm of the group-penalty gradient on the gates at the given
/// `(lambda, a)`; pair-first over the augmented axis.
pub fn penalty_grad_frobenius(params: &NetParams, lambda: f64, a: f64, eps: f64) -> f64 {
    let dim = params.w0.ncols();
    let p = dim / 2;
    let e2 = eps * eps;
    let col_term = |j: usize| -> f64 {
        let mut sq = 0.0;
        for r in 0..params.w0.nrows() {
            let v = params.w0[[r, j]];
            sq += v * v;
        }
        let factor = a * (sq + e2).powf(0.5 * a - 1.0);
        factor * factor * sq
    };
    let mut total = 0.0;
    for m in 0..p {
        total += col_term(m) + col_term(m + p);
    }
    lambda * total.sqrt()
}

/// Frobenius norm of the prediction-loss gradient on the gates (no penalty,
/// no deep l2); pair-first over the augmented axis.
pub fn pred_grad_frobenius(
    params: &NetParams,
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    net: &NetConfig,
) -> Result<f64> {
    let bare = NetConfig {
        deep_l2: 0.0,
        ..net.clone()
    };
    let (_, grads) = nn::loss_and_grads(params, x, y, 0.0, 1.0, &bare)?;
    let dim = grads.w0.ncols();
    let p = dim / 2;
    let mut total = 0.0;
    for r in 0..grads.w0.nrows() {
        for m in 0..p {
            let ga = grads.w0[[r, m]];
            let gb = grads.w0[[r, m + p]];
            total += ga * ga + gb * gb;
        }
    }
    Ok(total.sqrt())
}

fn regularization_ratio(
    params: &NetParams,
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    lambda: f64,
    a: f64,
    net: &NetConfig,
) -> f64 {
    let pen = penalty_grad_frobenius(params, lambda, a, net.smoothing_eps);
    match pred_grad_frobenius(params, x, y, net) {
        Ok(pred) if pred > 0.0 => pen / pred,
        _ => f64::INFINITY,
    }
}

/// Calibrates `[lambda_min, lambda_max]` by anchoring the penalty-to-loss
/// gradient ratio to `[r_min, r_max]`.
///
/// Runs `warmup` unregularized steps from a fresh initialization, computes
/// the base ratio `rho0` at `a = 1` with lambda factored out (the ratio is
/// linear in lambda at fixed parameters), and returns
/// `(r_min / rho0, r_max / rho0)`.
pub fn calibrate_lambda_range<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    net: &NetConfig,
    r_min: f64,
    r_max: f64,
    warmup: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(Error::DimensionMismatch(
            "need 0 < r_min < r_max for lambda calibration".into(),
        ));
    }
    net.validate()?;
    let two_p = 2 * data.p();
    if net.input_dim != two_p {
        return Err(Error::DimensionMismatch(format!(
            "net input_dim {} but augmented design has {two_p} columns",
            net.input_dim
        )));
    }
    let aug = data.augmented();
    let mut params = nn::init_params(net, rng)?;
    let mut state = AdamState::new(&params);
    let warm_cfg = unregularized(net);
    let batch = CALIBRATION_BATCH.min(aug.nrows());
    for _ in 0..warmup {
        let idx = draw_batch(aug.nrows(), batch, rng);
        let xb = aug.select(Axis(0), &idx);
        let yb = data.y.select(Axis(0), &idx);
        let (_, mut grads) = nn::loss_and_grads(&params, &xb.view(), &yb.view(), 0.0, 1.0, &warm_cfg)?;
        if let Some(max_norm) = net.clip_max_norm {
            nn::clip_grads(&mut grads, max_norm);
        }
        nn::adam_step(&mut params, &mut state, &grads, net.learning_rate);
    }
    let pred = pred_grad_frobenius(&params, &aug.view(), &data.y.view(), net)?;
    if pred < 1e-12 {
        return Err(Error::DegenerateGradient);
    }
    let pen = penalty_grad_frobenius(&params, 1.0, 1.0, net.smoothing_eps);
    let rho0 = pen / pred;
    Ok((r_min / rho0, r_max / rho0))
}

/// Minibatch rows used by the calibration warm-up.
const CALIBRATION_BATCH: usize = 256;

/// Mean absolute change of the per-coordinate group norms between two
/// consecutive snapshots.
pub fn mean_abs_norm_change(prev: &ArrayView1<'_, f64>, curr: &ArrayView1<'_, f64>) -> f64 {
    let dim = prev.len();
    let p = dim / 2;
    let mut total = 0.0;
    for m in 0..p {
        total += (curr[m] - prev[m]).abs() + (curr[m + p] - prev[m + p]).abs();
    }
    if dim % 2 == 1 {
        total += (curr[dim - 1] - prev[dim - 1]).abs();
    }
    total / dim as f64
}

/// Picks the smallest candidate block size whose pilot blocks show settled
/// group norms: the change statistic stays below `delta` on the last
/// `ceil(M/5)` steps of every pilot block. Falls back to the largest
/// candidate (with a warning) when none qualifies.
pub fn calibrate_block_size<R: Rng + ?Sized>(
    data: &AugmentedDesign,
    cfg: &BssConfig,
    delta: f64,
    candidates: &[usize],
    rng: &mut R,
) -> Result<usize> {
    assert!(!candidates.is_empty(), "candidate list must be nonempty");
    cfg.validate()?;
    const PILOT_BLOCKS: usize = 4;
    let aug = data.augmented();
    let trainer = Trainer {
        aug: &aug,
        y: &data.y,
        cfg,
    };
    let mut params = nn::init_params(&cfg.net, rng)?;
    let mut state = AdamState::new(&params);
    let warm_cfg = unregularized(&cfg.net);
    for _ in 0..cfg.warmup_steps {
        trainer.step(&mut params, &mut state, 0.0, 1.0, &warm_cfg, rng)?;
    }

    for &m in candidates {
        if m == 0 {
            continue;
        }
        let mut pilot_params = params.clone();
        let mut pilot_state = state.clone();
        let tail = m.div_ceil(5);
        let mut accepted = true;
        for _ in 0..PILOT_BLOCKS {
            let (lambda, a) = sample_regime(&cfg.prior, rng);
            let mut prev = nn::group_norms(&pilot_params);
            for step in 0..m {
                trainer.step(&mut pilot_params, &mut pilot_state, lambda, a, &cfg.net, rng)?;
                let curr = nn::group_norms(&pilot_params);
                let change = mean_abs_norm_change(&prev.view(), &curr.view());
                if step + tail >= m && change >= delta {
                    accepted = false;
                }
                prev = curr;
            }
        }
        if accepted {
            return Ok(m);
        }
    }
    let fallback = *candidates.last().unwrap();
    log::warn!(
        "calibrate_block_size: no candidate settled below delta {delta:e}; using {fallback}"
    );
    Ok(fallback)
}

/// Element-wise mean of the member scores; regimes are concatenated.
pub fn ensemble_scores(runs: &[PersistenceScores]) -> Result<PersistenceScores> {
    let first = runs.first().ok_or(Error::TooFewTrials { n: 0 })?;
    let len = first.s_hat.len();
    for r in runs {
        if r.s_hat.len() != len {
            return Err(Error::LengthMismatch {
                left: len,
                right: r.s_hat.len(),
            });
        }
    }
    let mut sum = Array1::<f64>::zeros(len);
    let mut regimes = Vec::new();
    let mut snapshots = 0usize;
    for r in runs {
        sum += &r.s_hat;
        regimes.extend_from_slice(&r.regimes);
        snapshots += r.snapshots_used;
    }
    Ok(PersistenceScores {
        s_hat: sum / runs.len() as f64,
        snapshots_used: snapshots,
        regimes,
    })
}
