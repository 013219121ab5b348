//! Feedforward MLP with a group quasi-norm penalty on the first-layer weight
//! columns, an l2 penalty on the deeper layers, analytic gradients, Adam, and
//! global gradient clipping.
//!
//! The first-layer column `w_j` acts as a gate for input `j`; its l2 norm is
//! the feature's activity. Inputs are knockoff-augmented, so the input axis
//! has even length `2p` and coordinate `j` is paired with `j + p`.
//!
//! # Swap exactness
//!
//! Selection statistics downstream rely on an exact equivariance: swapping
//! input columns `(j, j+p)` together with the corresponding initial gate
//! columns must reproduce the whole training trajectory with those columns
//! exchanged, bit for bit. Floating-point addition is commutative but not
//! associative, so every reduction over the `2p` axis here combines the pair
//! `(j, j+p)` into one term before accumulating. Reductions over other axes
//! (samples, hidden units) use a fixed order and are unaffected by swaps.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    Logistic,
}

/// Architecture and optimization settings for the gated MLP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetConfig {
    /// Augmented input dimension `2p`; must be even.
    pub input_dim: usize,
    /// Number of width-by-width hidden layers after the gating layer.
    pub depth: usize,
    /// Hidden width `d`.
    pub width: usize,
    pub activation: Activation,
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    /// l2 coefficient on deep-layer weights (excludes gates and biases).
    pub deep_l2: f64,
    /// Smoothing constant in the penalty `(||w||^2 + eps^2)^(a/2)`.
    pub smoothing_eps: f64,
    /// Global gradient clipping threshold; `None` disables clipping.
    pub clip_max_norm: Option<f64>,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 || self.input_dim % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "input_dim must be even and >= 2 (augmented design), got {}",
                self.input_dim
            )));
        }
        if self.depth == 0 || self.width == 0 {
            return Err(Error::DimensionMismatch(
                "depth and width must be positive".into(),
            ));
        }
        // learning_rate 0 is allowed: it freezes the trajectory, which the
        // calibration pilots rely on as a degenerate case.
        if !(self.learning_rate >= 0.0) || !(self.smoothing_eps > 0.0) || self.deep_l2 < 0.0 {
            return Err(Error::DimensionMismatch(
                "learning_rate must be nonnegative, smoothing_eps positive, deep_l2 nonnegative"
                    .into(),
            ));
        }
        if let Some(c) = self.clip_max_norm {
            if !(c > 0.0) {
                return Err(Error::DimensionMismatch(
                    "clip_max_norm must be positive when set".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Network parameters. `w0` column `j` is the gate for input coordinate `j`;
/// `deep` holds the hidden-to-hidden layers and `head_w`/`head_b` the scalar
/// output head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetParams {
    pub w0: Array2<f64>,
    pub b0: Array1<f64>,
    pub deep: Vec<(Array2<f64>, Array1<f64>)>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl NetParams {
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            w0: Array2::zeros(other.w0.dim()),
            b0: Array1::zeros(other.b0.dim()),
            deep: other
                .deep
                .iter()
                .map(|(w, b)| (Array2::zeros(w.dim()), Array1::zeros(b.dim())))
                .collect(),
            head_w: Array1::zeros(other.head_w.dim()),
            head_b: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w0.ncols()
    }
}

/// He-scaled normal initialization: weights `N(0, 2 / fan_in)`, biases zero.
pub fn init_params<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Result<NetParams> {
    cfg.validate()?;
    let d = cfg.width;
    let dim = cfg.input_dim;
    let mut draw = |scale: f64, arr: &mut [f64]| {
        for v in arr.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = scale * z;
        }
    };
    let mut w0 = Array2::<f64>::zeros((d, dim));
    draw((2.0 / dim as f64).sqrt(), w0.as_slice_mut().unwrap());
    let deep_scale = (2.0 / d as f64).sqrt();
    let mut deep = Vec::with_capacity(cfg.depth);
    for _ in 0..cfg.depth {
        let mut w = Array2::<f64>::zeros((d, d));
        draw(deep_scale, w.as_slice_mut().unwrap());
        deep.push((w, Array1::zeros(d)));
    }
    let mut head_w = Array1::<f64>::zeros(d);
    draw(deep_scale, head_w.as_slice_mut().unwrap());
    Ok(NetParams {
        w0,
        b0: Array1::zeros(d),
        deep,
        head_w,
        head_b: 0.0,
    })
}

/// First-layer affine map `x w0^T + b0` with pair-first accumulation over the
/// input axis (see module docs). Output is `n x d`.
fn first_layer_forward(x: &ArrayView2<'_, f64>, w0: &Array2<f64>, b0: &Array1<f64>) -> Array2<f64> {
    let (n, dim) = x.dim();
    let d = w0.nrows();
    debug_assert_eq!(dim, w0.ncols());
    debug_assert_eq!(dim % 2, 0);
    let p = dim / 2;
    let xs = x.as_standard_layout();
    let xsl = xs.as_slice().unwrap();
    let w0t = w0.t().as_standard_layout().to_owned();
    let wsl = w0t.as_slice().unwrap();
    let bsl = b0.as_slice().unwrap();
    let mut out = Array2::<f64>::zeros((n, d));
    let osl = out.as_slice_mut().unwrap();
    for i in 0..n {
        let xrow = &xsl[i * dim..(i + 1) * dim];
        let orow = &mut osl[i * d..(i + 1) * d];
        orow.copy_from_slice(bsl);
        for k in 0..p {
            let xa = xrow[k];
            let xb = xrow[k + p];
            let wa = &wsl[k * d..k * d + d];
            let wb = &wsl[(k + p) * d..(k + p) * d + d];
            for r in 0..d {
                // One rounded pair term per k; addition of the two products
                // commutes exactly under a (k, k+p) swap.
                let t = xa * wa[r] + xb * wb[r];
                orow[r] += t;
            }
        }
    }
    out
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

struct ForwardCache {
    z1: Array2<f64>,
    /// Post-activation outputs: `acts[0]` is the first hidden layer,
    /// `acts[l+1]` the output of deep layer `l`.
    acts: Vec<Array2<f64>>,
    /// Pre-activations of the deep layers, parallel to `deep`.
    preacts: Vec<Array2<f64>>,
    output: Array1<f64>,
}

fn forward_cached(params: &NetParams, x: &ArrayView2<'_, f64>) -> ForwardCache {
    let z1 = first_layer_forward(x, &params.w0, &params.b0);
    let mut acts = vec![relu(&z1)];
    let mut preacts = Vec::with_capacity(params.deep.len());
    for (w, b) in &params.deep {
        let mut z = acts.last().unwrap().dot(&w.t());
        z += &b.view().insert_axis(Axis(0));
        acts.push(relu(&z));
        preacts.push(z);
    }
    let output = acts.last().unwrap().dot(&params.head_w) + params.head_b;
    ForwardCache {
        z1,
        acts,
        preacts,
        output,
    }
}

fn check_input(params: &NetParams, x: &ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != params.w0.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} columns but the net expects {}",
            x.ncols(),
            params.w0.ncols()
        )));
    }
    Ok(())
}

/// Predictions for a batch (one scalar per row).
pub fn forward(params: &NetParams, x: &ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    check_input(params, x)?;
    Ok(forward_cached(params, x).output)
}

fn column_sqnorm(w: &Array2<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..w.nrows() {
        let v = w[[r, j]];
        s += v * v;
    }
    s
}

/// Smoothed group quasi-norm penalty
/// `lambda * sum_j (||w_j||^2 + eps^2)^(a/2)`, accumulated pair-first.
pub fn penalty(params: &NetParams, lambda: f64, a: f64, eps: f64) -> f64 {
    debug_assert!(a > 0.0 && a <= 1.0);
    let dim = params.w0.ncols();
    let p = dim / 2;
    let e2 = eps * eps;
    let half_a = 0.5 * a;
    let mut sum = 0.0;
    for m in 0..p {
        let ta = (column_sqnorm(&params.w0, m) + e2).powf(half_a);
        let tb = (column_sqnorm(&params.w0, m + p) + e2).powf(half_a);
        sum += ta + tb;
    }
    lambda * sum
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn prediction_loss_and_grad(
    kind: LossKind,
    output: &Array1<f64>,
    y: &ArrayView1<'_, f64>,
) -> (f64, Array1<f64>) {
    let m = output.len() as f64;
    match kind {
        LossKind::SquaredError => {
            let mut loss = 0.0;
            let mut g = Array1::<f64>::zeros(output.len());
            for i in 0..output.len() {
                let diff = output[i] - y[i];
                loss += diff * diff;
                g[i] = 2.0 * diff / m;
            }
            (loss / m, g)
        }
        LossKind::Logistic => {
            let mut loss = 0.0;
            let mut g = Array1::<f64>::zeros(output.len());
            for i in 0..output.len() {
                let f = output[i];
                loss += f.max(0.0) - f * y[i] + (-f.abs()).exp().ln_1p();
                g[i] = (sigmoid(f) - y[i]) / m;
            }
            (loss / m, g)
        }
    }
}

/// Loss of the full objective (prediction + group penalty + deep l2) and its
/// exact analytic gradients, shaped like the parameters.
pub fn loss_and_grads(
    params: &NetParams,
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    lambda: f64,
    a: f64,
    cfg: &NetConfig,
) -> Result<(f64, NetParams)> {
    check_input(params, x)?;
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "batch rows {} vs targets {}",
            x.nrows(),
            y.len()
        )));
    }
    let cache = forward_cached(params, x);
    let (pred_loss, g_f) = prediction_loss_and_grad(cfg.loss_kind, &cache.output, y);

    let mut grads = NetParams::zeros_like(params);
    let last = cache.acts.last().unwrap();
    grads.head_w = last.t().dot(&g_f);
    grads.head_b = g_f.sum();

    let d = params.head_w.len();
    let n = x.nrows();
    let mut g_a = Array2::from_shape_fn((n, d), |(i, r)| g_f[i] * params.head_w[r]);
    for l in (0..params.deep.len()).rev() {
        let z = &cache.preacts[l];
        let mut g_z = g_a;
        g_z.zip_mut_with(z, |g, &zv| {
            if zv <= 0.0 {
                *g = 0.0;
            }
        });
        grads.deep[l].0 = g_z.t().dot(&cache.acts[l]);
        grads.deep[l].1 = g_z.sum_axis(Axis(0));
        g_a = g_z.dot(&params.deep[l].0);
    }
    let mut g_z1 = g_a;
    g_z1.zip_mut_with(&cache.z1, |g, &zv| {
        if zv <= 0.0 {
            *g = 0.0;
        }
    });
    grads.w0 = g_z1.t().dot(x);
    grads.b0 = g_z1.sum_axis(Axis(0));

    // Group penalty gradient on column j:
    // lambda * a * (||w_j||^2 + eps^2)^(a/2 - 1) * w_j.
    let e2 = cfg.smoothing_eps * cfg.smoothing_eps;
    for j in 0..params.w0.ncols() {
        let base = column_sqnorm(&params.w0, j) + e2;
        if base == 0.0 {
            continue;
        }
        let factor = lambda * a * base.powf(0.5 * a - 1.0);
        for r in 0..params.w0.nrows() {
            grads.w0[[r, j]] += factor * params.w0[[r, j]];
        }
    }

    // Deep l2 applies to deep and head weights only, never biases or gates.
    let gamma = cfg.deep_l2;
    let mut deep_sq = 0.0;
    for (l, (w, _)) in params.deep.iter().enumerate() {
        deep_sq += w.iter().map(|v| v * v).sum::<f64>();
        if gamma != 0.0 {
            grads.deep[l].0.zip_mut_with(w, |g, &wv| *g += gamma * wv);
        }
    }
    deep_sq += params.head_w.iter().map(|v| v * v).sum::<f64>();
    if gamma != 0.0 {
        grads
            .head_w
            .zip_mut_with(&params.head_w, |g, &wv| *g += gamma * wv);
    }

    let loss = pred_loss + penalty(params, lambda, a, cfg.smoothing_eps) + 0.5 * gamma * deep_sq;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "lambda={lambda:e}, a={a}, batch={n}"
        )));
    }
    Ok((loss, grads))
}

/// Global l2 norm of a gradient set; the `w0` part is accumulated pair-first.
fn global_grad_norm(grads: &NetParams) -> f64 {
    let dim = grads.w0.ncols();
    let p = dim / 2;
    let mut s = 0.0;
    for r in 0..grads.w0.nrows() {
        for m in 0..p {
            let ga = grads.w0[[r, m]];
            let gb = grads.w0[[r, m + p]];
            s += ga * ga + gb * gb;
        }
    }
    for v in grads.b0.iter() {
        s += v * v;
    }
    for (w, b) in &grads.deep {
        for v in w.iter() {
            s += v * v;
        }
        for v in b.iter() {
            s += v * v;
        }
    }
    for v in grads.head_w.iter() {
        s += v * v;
    }
    s += grads.head_b * grads.head_b;
    s.sqrt()
}

/// Scales all gradients by `max_norm / g` when the global l2 norm `g`
/// exceeds `max_norm`.
pub fn clip_grads(grads: &mut NetParams, max_norm: f64) {
    let norm = global_grad_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        scale_params(grads, scale);
    }
}

fn scale_params(p: &mut NetParams, scale: f64) {
    p.w0.mapv_inplace(|v| v * scale);
    p.b0.mapv_inplace(|v| v * scale);
    for (w, b) in &mut p.deep {
        w.mapv_inplace(|v| v * scale);
        b.mapv_inplace(|v| v * scale);
    }
    p.head_w.mapv_inplace(|v| v * scale);
    p.head_b *= scale;
}

/// Adam moment accumulators shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: NetParams,
    pub v: NetParams,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &NetParams) -> Self {
        Self {
            m: NetParams::zeros_like(params),
            v: NetParams::zeros_like(params),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn adam_update_slice(
    p: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    lr: f64,
    b1: f64,
    b2: f64,
    bc1: f64,
    bc2: f64,
    eps: f64,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        p[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Standard bias-corrected Adam update; increments the step counter.
pub fn adam_step(params: &mut NetParams, state: &mut AdamState, grads: &NetParams, lr: f64) {
    state.t += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    let eps = state.eps;

    adam_update_slice(
        params.w0.as_slice_mut().unwrap(),
        state.m.w0.as_slice_mut().unwrap(),
        state.v.w0.as_slice_mut().unwrap(),
        grads.w0.as_slice().unwrap(),
        lr,
        b1,
        b2,
        bc1,
        bc2,
        eps,
    );
    adam_update_slice(
        params.b0.as_slice_mut().unwrap(),
        state.m.b0.as_slice_mut().unwrap(),
        state.v.b0.as_slice_mut().unwrap(),
        grads.b0.as_slice().unwrap(),
        lr,
        b1,
        b2,
        bc1,
        bc2,
        eps,
    );
    for l in 0..params.deep.len() {
        adam_update_slice(
            params.deep[l].0.as_slice_mut().unwrap(),
            state.m.deep[l].0.as_slice_mut().unwrap(),
            state.v.deep[l].0.as_slice_mut().unwrap(),
            grads.deep[l].0.as_slice().unwrap(),
            lr,
            b1,
            b2,
            bc1,
            bc2,
            eps,
        );
        adam_update_slice(
            params.deep[l].1.as_slice_mut().unwrap(),
            state.m.deep[l].1.as_slice_mut().unwrap(),
            state.v.deep[l].1.as_slice_mut().unwrap(),
            grads.deep[l].1.as_slice().unwrap(),
            lr,
            b1,
            b2,
            bc1,
            bc2,
            eps,
        );
    }
    adam_update_slice(
        params.head_w.as_slice_mut().unwrap(),
        state.m.head_w.as_slice_mut().unwrap(),
        state.v.head_w.as_slice_mut().unwrap(),
        grads.head_w.as_slice().unwrap(),
        lr,
        b1,
        b2,
        bc1,
        bc2,
        eps,
    );
    {
        let g = grads.head_b;
        state.m.head_b = b1 * state.m.head_b + (1.0 - b1) * g;
        state.v.head_b = b2 * state.v.head_b + (1.0 - b2) * g * g;
        let mhat = state.m.head_b / bc1;
        let vhat = state.v.head_b / bc2;
        params.head_b -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Per-coordinate gate activity: `||w0 column j||_2` for every input j.
pub fn group_norms(params: &NetParams) -> Array1<f64> {
    let dim = params.w0.ncols();
    Array1::from_iter((0..dim).map(|j| column_sqnorm(&params.w0, j).sqrt()))
}

/// Per-sample gradient of the network output with respect to each input
/// coordinate, by backpropagation to the inputs. ReLU subgradient at 0 is 0.
pub fn input_grads(params: &NetParams, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_input(params, x)?;
    let cache = forward_cached(params, x);
    let n = x.nrows();
    let d = params.head_w.len();
    let mut g_a = Array2::from_shape_fn((n, d), |(_, r)| params.head_w[r]);
    for l in (0..params.deep.len()).rev() {
        let z = &cache.preacts[l];
        let mut g_z = g_a;
        g_z.zip_mut_with(z, |g, &zv| {
            if zv <= 0.0 {
                *g = 0.0;
            }
        });
        g_a = g_z.dot(&params.deep[l].0);
    }
    let mut g_z1 = g_a;
    g_z1.zip_mut_with(&cache.z1, |g, &zv| {
        if zv <= 0.0 {
            *g = 0.0;
        }
    });
    Ok(g_z1.dot(&params.w0))
}
