//! Feedforward network for tabular data with per-column categorical
//! embeddings and a linear skip path.
//!
//! Layout:
//!
//! ```text
//! codes_j  -> embedding_j ----------------\
//! numeric  -> dense(w_num) -> relu -------+-> z
//! z -> dense -> bn -> relu -> dropout -> dense -> bn -> relu -> dropout -> dense --+-> out
//! z -> dense (skip) --------------------------------------------------------------/
//! ```
//!
//! Gradients are written out by hand; everything is generic over the float
//! type so the same code runs in `f32` for training and `f64` for gradient
//! checks.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{s, Array1, Array2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Deadline;
use crate::preprocess::MIN_EMBED_LEVELS;
use crate::rng::rng_from;
use crate::task::Targets;

pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Serialize
    + DeserializeOwned
    + Debug
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub const MAX_EMBEDDING_DIM: usize = 100;
pub const MIN_NUMERIC_WIDTH: usize = 32;
pub const MAX_NUMERIC_WIDTH: usize = 2056;
pub const MAX_HIDDEN: usize = 1024;
const BN_EPS: f64 = 1e-5;

/// Embedding width for a categorical feature with `k` levels:
/// `min(100, ceil(1.6 * k^0.56))`. Features with fewer than 4 levels are
/// one-hot encoded instead, so they have no embedding width.
pub fn embedding_dim(k: u32) -> Result<usize> {
    if k < MIN_EMBED_LEVELS {
        return Err(Error::InvalidArgument(format!(
            "{k} levels is below the embedding minimum of {MIN_EMBED_LEVELS}; one-hot encode instead"
        )));
    }
    let raw = (1.6 * (k as f64).powf(0.56)).ceil() as usize;
    Ok(raw.min(MAX_EMBEDDING_DIM))
}

/// Width of the numeric embedding layer; monotone in the numeric feature
/// count and in the numeric share of all inputs.
pub fn numeric_embedding_width(numeric: usize, categorical: usize) -> usize {
    if numeric == 0 {
        return 0;
    }
    let frac = numeric as f64 / (numeric + categorical) as f64;
    let raw = (4.0 * (numeric as f64).sqrt() * (0.5 + frac)).round() as usize;
    raw.clamp(MIN_NUMERIC_WIDTH, MAX_NUMERIC_WIDTH)
}

pub fn hidden_widths(out_dim: usize, regression: bool) -> (usize, usize) {
    let classes = if regression { 1 } else { out_dim };
    let scale = classes.div_ceil(10).max(1);
    ((256 * scale).min(MAX_HIDDEN), (128 * scale).min(MAX_HIDDEN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetHyperparameters {
    pub dropout: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub bn_momentum: f64,
}

impl Default for NetHyperparameters {
    fn default() -> Self {
        NetHyperparameters {
            dropout: 0.1,
            weight_decay: 1e-6,
            learning_rate: 3e-4,
            max_epochs: 300,
            patience: 20,
            batch_size: 256,
            bn_momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub numeric_inputs: usize,
    /// Level count per embedded column; tables have one extra row for Unknown.
    pub cardinalities: Vec<u32>,
    pub embedding_dims: Vec<usize>,
    pub numeric_width: usize,
    pub hidden: (usize, usize),
    pub out_dim: usize,
    pub regression: bool,
    pub hyper: NetHyperparameters,
}

impl NetConfig {
    pub fn new(
        numeric_inputs: usize,
        cardinalities: Vec<u32>,
        out_dim: usize,
        regression: bool,
        hyper: NetHyperparameters,
    ) -> Result<Self> {
        let embedding_dims = cardinalities
            .iter()
            .map(|&k| embedding_dim(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(NetConfig {
            numeric_inputs,
            numeric_width: numeric_embedding_width(numeric_inputs, cardinalities.len()),
            embedding_dims,
            cardinalities,
            hidden: hidden_widths(out_dim, regression),
            out_dim,
            regression,
            hyper,
        })
    }

    /// Width of the concatenated embedding vector.
    pub fn concat_width(&self) -> usize {
        self.embedding_dims.iter().sum::<usize>() + self.numeric_width
    }
}

/// Learnable parameters; also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NetParams<T> {
    pub embeddings: Vec<Array2<T>>,
    pub numeric_w: Array2<T>,
    pub numeric_b: Array1<T>,
    pub w1: Array2<T>,
    pub gamma1: Array1<T>,
    pub beta1: Array1<T>,
    pub w2: Array2<T>,
    pub gamma2: Array1<T>,
    pub beta2: Array1<T>,
    pub w3: Array2<T>,
    pub skip_w: Array2<T>,
    pub out_b: Array1<T>,
}

/// Batch-norm running statistics (not learned by gradient descent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormStats<T> {
    pub mean1: Array1<T>,
    pub var1: Array1<T>,
    pub mean2: Array1<T>,
    pub var2: Array1<T>,
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.gen_range(-a..a)))
}

impl<T: Real> NetParams<T> {
    /// Random initialization of every tensor.
    pub fn random(config: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let dz = config.concat_width();
        let (h1, h2) = config.hidden;
        let c = config.out_dim;
        let embeddings = config
            .cardinalities
            .iter()
            .zip(&config.embedding_dims)
            .map(|(&k, &d)| uniform(rng, k as usize + 1, d))
            .collect();
        let numeric_w = uniform(rng, config.numeric_inputs, config.numeric_width);
        let vec = |rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64| {
            Array1::from_shape_simple_fn(n, || T::lit(rng.gen_range(lo..hi)))
        };
        NetParams {
            embeddings,
            numeric_b: vec(rng, config.numeric_width, -0.1, 0.1),
            numeric_w,
            w1: uniform(rng, dz, h1),
            gamma1: vec(rng, h1, 0.5, 1.5),
            beta1: vec(rng, h1, -0.5, 0.5),
            w2: uniform(rng, h1, h2),
            gamma2: vec(rng, h2, 0.5, 1.5),
            beta2: vec(rng, h2, -0.5, 0.5),
            w3: uniform(rng, h2, c),
            skip_w: uniform(rng, dz, c),
            out_b: vec(rng, c, -0.1, 0.1),
        }
    }

    /// Training initialization: unit batch-norm scale, zero output layers so
    /// the untrained network predicts the target mean / uniform classes.
    pub fn init_for_training(config: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::random(config, rng);
        p.numeric_b.fill(T::zero());
        p.gamma1.fill(T::one());
        p.beta1.fill(T::zero());
        p.gamma2.fill(T::one());
        p.beta2.fill(T::zero());
        p.w3.fill(T::zero());
        p.skip_w.fill(T::zero());
        p.out_b.fill(T::zero());
        p
    }

    pub fn zeros_like(&self) -> Self {
        let z2 = |a: &Array2<T>| Array2::zeros(a.raw_dim());
        let z1 = |a: &Array1<T>| Array1::zeros(a.raw_dim());
        NetParams {
            embeddings: self.embeddings.iter().map(z2).collect(),
            numeric_w: z2(&self.numeric_w),
            numeric_b: z1(&self.numeric_b),
            w1: z2(&self.w1),
            gamma1: z1(&self.gamma1),
            beta1: z1(&self.beta1),
            w2: z2(&self.w2),
            gamma2: z1(&self.gamma2),
            beta2: z1(&self.beta2),
            w3: z2(&self.w3),
            skip_w: z2(&self.skip_w),
            out_b: z1(&self.out_b),
        }
    }

    /// Every tensor as a flat slice, paired with whether weight decay applies.
    pub fn tensors_mut(&mut self) -> Vec<(&mut [T], bool)> {
        self.standardize();
        let mut out: Vec<(&mut [T], bool)> = Vec::new();
        for e in self.embeddings.iter_mut() {
            out.push((e.as_slice_mut().unwrap(), true));
        }
        out.push((self.numeric_w.as_slice_mut().unwrap(), true));
        out.push((self.numeric_b.as_slice_mut().unwrap(), false));
        out.push((self.w1.as_slice_mut().unwrap(), true));
        out.push((self.gamma1.as_slice_mut().unwrap(), false));
        out.push((self.beta1.as_slice_mut().unwrap(), false));
        out.push((self.w2.as_slice_mut().unwrap(), true));
        out.push((self.gamma2.as_slice_mut().unwrap(), false));
        out.push((self.beta2.as_slice_mut().unwrap(), false));
        out.push((self.w3.as_slice_mut().unwrap(), true));
        out.push((self.skip_w.as_slice_mut().unwrap(), true));
        out.push((self.out_b.as_slice_mut().unwrap(), false));
        out
    }

    fn standardize(&mut self) {
        fn fix2<T: Real>(a: &mut Array2<T>) {
            if !a.is_standard_layout() {
                *a = a.as_standard_layout().into_owned();
            }
        }
        fn fix1<T: Real>(a: &mut Array1<T>) {
            if !a.is_standard_layout() {
                *a = a.as_standard_layout().into_owned();
            }
        }
        self.embeddings.iter_mut().for_each(fix2);
        for a in [&mut self.numeric_w, &mut self.w1, &mut self.w2, &mut self.w3, &mut self.skip_w] {
            fix2(a);
        }
        for a in [
            &mut self.numeric_b,
            &mut self.gamma1,
            &mut self.beta1,
            &mut self.gamma2,
            &mut self.beta2,
            &mut self.out_b,
        ] {
            fix1(a);
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.embeddings.len()).map(|i| format!("embedding{i}")).collect();
        names.extend(
            [
                "numeric_w", "numeric_b", "w1", "gamma1", "beta1", "w2", "gamma2", "beta2", "w3", "skip_w", "out_b",
            ]
            .map(str::to_string),
        );
        names
    }

    pub fn squared_norm(&mut self) -> f64 {
        self.tensors_mut()
            .iter()
            .flat_map(|(t, _)| t.iter())
            .map(|v| v.to_f64().unwrap().powi(2))
            .sum()
    }

    pub fn is_finite(&mut self) -> bool {
        self.tensors_mut().iter().all(|(t, _)| t.iter().all(|v| v.is_finite()))
    }
}

impl<T: Real> NormStats<T> {
    pub fn new(config: &NetConfig) -> Self {
        let (h1, h2) = config.hidden;
        NormStats {
            mean1: Array1::zeros(h1),
            var1: Array1::ones(h1),
            mean2: Array1::zeros(h2),
            var2: Array1::ones(h2),
        }
    }
}

/// One batch of network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetBatch<T> {
    pub numeric: Array2<T>,
    pub codes: Array2<u32>,
}

impl<T: Real> NetBatch<T> {
    pub fn from_f64(numeric: &Array2<f64>, codes: &Array2<u32>) -> Self {
        NetBatch {
            numeric: numeric.mapv(T::lit),
            codes: codes.clone(),
        }
    }

    pub fn rows(&self) -> usize {
        self.numeric.nrows().max(self.codes.nrows())
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        NetBatch {
            numeric: self.numeric.select(Axis(0), idx),
            codes: self.codes.select(Axis(0), idx),
        }
    }
}

pub enum Mode<'a> {
    /// Running statistics for batch norm, no dropout.
    Inference,
    /// Batch statistics; dropout when an RNG is supplied.
    Train { dropout: Option<&'a mut ChaCha8Rng> },
}

struct BnCache<T> {
    normalized: Array2<T>,
    inv_std: Array1<T>,
    activated: Array2<T>,
    mask: Option<Array2<T>>,
    mean: Array1<T>,
    var: Array1<T>,
}

struct Cache<T> {
    numeric_pre: Array2<T>,
    z: Array2<T>,
    h1: BnCache<T>,
    d1: Array2<T>,
    h2: BnCache<T>,
    d2: Array2<T>,
}

fn concat_z<T: Real>(params: &NetParams<T>, batch: &NetBatch<T>, numeric_act: &Array2<T>) -> Array2<T> {
    let b = batch.rows();
    let widths: usize = params.embeddings.iter().map(|e| e.ncols()).sum::<usize>() + numeric_act.ncols();
    let mut z = Array2::zeros((b, widths));
    let mut offset = 0;
    for (j, table) in params.embeddings.iter().enumerate() {
        let d = table.ncols();
        let rows_max = table.nrows() - 1;
        for r in 0..b {
            let code = (batch.codes[[r, j]] as usize).min(rows_max);
            z.slice_mut(s![r, offset..offset + d]).assign(&table.row(code));
        }
        offset += d;
    }
    if numeric_act.ncols() > 0 {
        z.slice_mut(s![.., offset..]).assign(numeric_act);
    }
    z
}

fn bn_forward<T: Real>(
    a: &Array2<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
    stats: Option<(&Array1<T>, &Array1<T>)>,
    dropout: Option<(&mut ChaCha8Rng, f64)>,
) -> BnCache<T> {
    let b = T::lit(a.nrows().max(1) as f64);
    let (mean, var) = match stats {
        Some((m, v)) => (m.clone(), v.clone()),
        None => {
            let mean = a.sum_axis(Axis(0)) / b;
            let centered = a - &mean;
            let var = (&centered * &centered).sum_axis(Axis(0)) / b;
            (mean, var)
        }
    };
    let inv_std = var.mapv(|v| T::one() / (v + T::lit(BN_EPS)).sqrt());
    let normalized = (a - &mean) * &inv_std;
    let mut activated = (&normalized * gamma + beta).mapv(|v| v.max(T::zero()));
    let mask = dropout.filter(|(_, p)| *p > 0.0).map(|(rng, p)| {
        let keep = T::lit(1.0 / (1.0 - p));
        Array2::from_shape_simple_fn(activated.raw_dim(), || if rng.gen::<f64>() < p { T::zero() } else { keep })
    });
    if let Some(m) = &mask {
        activated = &activated * m;
    }
    BnCache {
        normalized,
        inv_std,
        activated,
        mask,
        mean,
        var,
    }
}

fn forward_cached<T: Real>(
    config: &NetConfig,
    params: &NetParams<T>,
    stats: &NormStats<T>,
    batch: &NetBatch<T>,
    mode: Mode,
) -> (Array2<T>, Cache<T>) {
    let b = batch.rows();
    let numeric_pre = if config.numeric_width > 0 {
        batch.numeric.dot(&params.numeric_w) + &params.numeric_b
    } else {
        Array2::zeros((b, 0))
    };
    let numeric_act = numeric_pre.mapv(|v| v.max(T::zero()));
    let z = concat_z(params, batch, &numeric_act);
    let (train, mut rng) = match mode {
        Mode::Inference => (false, None),
        Mode::Train { dropout } => (true, dropout),
    };
    let p = config.hyper.dropout;
    let a1 = z.dot(&params.w1);
    let h1 = bn_forward(
        &a1,
        &params.gamma1,
        &params.beta1,
        (!train).then_some((&stats.mean1, &stats.var1)),
        rng.as_deref_mut().map(|r| (r, p)),
    );
    let d1 = h1.activated.clone();
    let a2 = d1.dot(&params.w2);
    let h2 = bn_forward(
        &a2,
        &params.gamma2,
        &params.beta2,
        (!train).then_some((&stats.mean2, &stats.var2)),
        rng.as_deref_mut().map(|r| (r, p)),
    );
    let d2 = h2.activated.clone();
    let out = d2.dot(&params.w3) + z.dot(&params.skip_w) + &params.out_b;
    (
        out,
        Cache {
            numeric_pre,
            z,
            h1,
            d1,
            h2,
            d2,
        },
    )
}

/// Raw network outputs (logits, or standardized regression values).
pub fn forward<T: Real>(
    config: &NetConfig,
    params: &NetParams<T>,
    stats: &NormStats<T>,
    batch: &NetBatch<T>,
    mode: Mode,
) -> Array2<T> {
    forward_cached(config, params, stats, batch, mode).0
}

pub fn softmax_rows<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Mean cross-entropy (classification) or mean absolute error (regression)
/// and its gradient with respect to the raw outputs.
fn output_loss<T: Real>(config: &NetConfig, out: &Array2<T>, targets: &Targets) -> (T, Array2<T>) {
    let b = T::lit(out.nrows().max(1) as f64);
    match targets {
        Targets::Classes { labels, .. } => {
            let mut probs = softmax_rows(out);
            let mut loss = T::zero();
            for (r, &l) in labels.iter().enumerate() {
                loss -= probs[[r, l]].max(T::lit(1e-30)).ln();
                probs[[r, l]] -= T::one();
            }
            (loss / b, probs / b)
        }
        Targets::Values(v) => {
            debug_assert!(config.regression);
            let mut grad = Array2::zeros(out.raw_dim());
            let mut loss = T::zero();
            for (r, &y) in v.iter().enumerate() {
                let diff = out[[r, 0]] - T::lit(y);
                loss += diff.abs();
                grad[[r, 0]] = if diff > T::zero() {
                    T::one()
                } else if diff < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
            }
            (loss / b, grad / b)
        }
    }
}


fn bn_backward<T: Real>(
    upstream: Array2<T>,
    cache: &BnCache<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
    g_gamma: &mut Array1<T>,
    g_beta: &mut Array1<T>,
) -> Array2<T> {
    let mut dy = upstream;
    if let Some(m) = &cache.mask {
        dy = dy * m;
    }
    let y = &cache.normalized * gamma + beta;
    dy.zip_mut_with(&y, |g, &v| {
        if v <= T::zero() {
            *g = T::zero();
        }
    });
    *g_gamma = (&dy * &cache.normalized).sum_axis(Axis(0));
    *g_beta = dy.sum_axis(Axis(0));
    let dn = dy * gamma;
    let b = T::lit(dn.nrows().max(1) as f64);
    let sum_dn = dn.sum_axis(Axis(0));
    let sum_dn_n = (&dn * &cache.normalized).sum_axis(Axis(0));
    let inner = dn * b - &sum_dn - &(&cache.normalized * &sum_dn_n);
    inner * &(&cache.inv_std / b)
}

/// Batch statistics from a training-mode forward pass.
pub type BatchStats<T> = NormStats<T>;

/// Loss and gradient on one batch in training mode (batch statistics for
/// batch norm; dropout only when an RNG is supplied).
pub fn loss_and_grad<T: Real>(
    config: &NetConfig,
    params: &NetParams<T>,
    batch: &NetBatch<T>,
    targets: &Targets,
    dropout: Option<&mut ChaCha8Rng>,
) -> (T, NetParams<T>, BatchStats<T>) {
    let placeholder = NormStats::new(config);
    let (out, cache) = forward_cached(config, params, &placeholder, batch, Mode::Train { dropout });
    let (loss, dout) = output_loss(config, &out, targets);
    let mut g = params.zeros_like();

    g.w3 = cache.d2.t().dot(&dout);
    g.skip_w = cache.z.t().dot(&dout);
    g.out_b = dout.sum_axis(Axis(0));
    let mut dz = dout.dot(&params.skip_w.t());

    let dd2 = dout.dot(&params.w3.t());
    let da2 = bn_backward(dd2, &cache.h2, &params.gamma2, &params.beta2, &mut g.gamma2, &mut g.beta2);
    g.w2 = cache.d1.t().dot(&da2);
    let dd1 = da2.dot(&params.w2.t());
    let da1 = bn_backward(dd1, &cache.h1, &params.gamma1, &params.beta1, &mut g.gamma1, &mut g.beta1);
    g.w1 = cache.z.t().dot(&da1);
    dz += &da1.dot(&params.w1.t());

    let mut offset = 0;
    for (j, table) in params.embeddings.iter().enumerate() {
        let d = table.ncols();
        let rows_max = table.nrows() - 1;
        for r in 0..batch.rows() {
            let code = (batch.codes[[r, j]] as usize).min(rows_max);
            let mut target = g.embeddings[j].row_mut(code);
            target += &dz.slice(s![r, offset..offset + d]);
        }
        offset += d;
    }
    if config.numeric_width > 0 {
        let mut dnum = dz.slice(s![.., offset..]).to_owned();
        dnum.zip_mut_with(&cache.numeric_pre, |g, &a| {
            if a <= T::zero() {
                *g = T::zero();
            }
        });
        g.numeric_w = batch.numeric.t().dot(&dnum);
        g.numeric_b = dnum.sum_axis(Axis(0));
    }
    let stats = NormStats {
        mean1: cache.h1.mean,
        var1: cache.h1.var,
        mean2: cache.h2.mean,
        var2: cache.h2.var,
    };
    (loss, g, stats)
}

/// Mean loss over `batch` in inference mode.
pub fn evaluate_loss<T: Real>(
    config: &NetConfig,
    params: &NetParams<T>,
    stats: &NormStats<T>,
    batch: &NetBatch<T>,
    targets: &Targets,
) -> f64 {
    let out = forward(config, params, stats, batch, Mode::Inference);
    output_loss(config, &out, targets).0.to_f64().unwrap()
}

struct AdamW<T> {
    m: NetParams<T>,
    v: NetParams<T>,
    step: i32,
}

impl<T: Real> AdamW<T> {
    fn new(params: &NetParams<T>) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut NetParams<T>, grads: &mut NetParams<T>, lr: f64, weight_decay: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let c1 = T::lit(1.0 - B1.powi(self.step));
        let c2 = T::lit(1.0 - B2.powi(self.step));
        let (b1, b2, lr_t, eps, wd) = (T::lit(B1), T::lit(B2), T::lit(lr), T::lit(EPS), T::lit(lr * weight_decay));
        let mut m = self.m.tensors_mut();
        let mut v = self.v.tensors_mut();
        let g = grads.tensors_mut();
        for (((p, decay), (m, _)), ((v, _), (g, _))) in
            params.tensors_mut().into_iter().zip(m.iter_mut()).zip(v.iter_mut().zip(g.into_iter()))
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                if decay {
                    p[i] -= wd * p[i];
                }
                p[i] -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainedNet<T> {
    pub params: NetParams<T>,
    pub stats: NormStats<T>,
    /// Holdout loss after each epoch; entry 0 is the untrained network.
    pub trace: Vec<f64>,
    pub best_epoch: usize,
    pub diverged: bool,
}

impl<T: Real> TrainedNet<T> {
    pub fn best_loss(&self) -> f64 {
        self.trace.get(self.best_epoch).copied().unwrap_or(f64::NAN)
    }
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(size.max(1)).map(<[usize]>::to_vec).collect();
    // batch norm needs at least two rows
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

/// Trains with AdamW and keeps the epoch with the lowest holdout loss.
///
/// Without a holdout every epoch runs and the final state is returned.
/// Non-finite parameters stop training; the best state so far is kept.
pub fn train<T: Real>(
    config: &NetConfig,
    data: &NetBatch<T>,
    targets: &Targets,
    holdout: Option<(&NetBatch<T>, &Targets)>,
    deadline: &Deadline,
    seed: u64,
) -> Result<TrainedNet<T>> {
    if deadline.expired() {
        return Err(Error::ModelUnavailable("time allowance exhausted before the first epoch".into()));
    }
    let hyper = &config.hyper;
    let mut rng = rng_from(seed);
    let mut params = NetParams::init_for_training(config, &mut rng);
    let mut stats = NormStats::new(config);
    let mut adam = AdamW::new(&params);
    let momentum = T::lit(hyper.bn_momentum);
    let rest = T::one() - momentum;

    let score = |p: &NetParams<T>, s: &NormStats<T>| holdout.map(|(b, t)| evaluate_loss(config, p, s, b, t));
    let mut trace = vec![score(&params, &stats).unwrap_or(f64::NAN)];
    let mut best = (params.clone(), stats.clone());
    let mut best_epoch = 0;
    let mut diverged = false;

    'epochs: for epoch in 1..=hyper.max_epochs {
        if epoch > 1 && deadline.expired() {
            log::debug!("network stopped after {} epochs by the time allowance", epoch - 1);
            break;
        }
        for idx in batches(data.rows(), hyper.batch_size, &mut rng) {
            let batch = data.select(&idx);
            let batch_targets = targets.select(&idx);
            let (_, mut grads, batch_stats) = loss_and_grad(config, &params, &batch, &batch_targets, Some(&mut rng));
            adam.update(&mut params, &mut grads, hyper.learning_rate, hyper.weight_decay);
            stats.mean1 = &stats.mean1 * momentum + &(batch_stats.mean1 * rest);
            stats.var1 = &stats.var1 * momentum + &(batch_stats.var1 * rest);
            stats.mean2 = &stats.mean2 * momentum + &(batch_stats.mean2 * rest);
            stats.var2 = &stats.var2 * momentum + &(batch_stats.var2 * rest);
            if !params.is_finite() {
                log::warn!("network diverged in epoch {epoch}; keeping epoch {best_epoch}");
                diverged = true;
                break 'epochs;
            }
        }
        match score(&params, &stats) {
            Some(loss) => {
                trace.push(loss);
                if loss.is_finite() && loss < trace[best_epoch] || !trace[best_epoch].is_finite() && loss.is_finite() {
                    best_epoch = epoch;
                    best = (params.clone(), stats.clone());
                } else if epoch - best_epoch >= hyper.patience {
                    break;
                }
            }
            None => {
                trace.push(f64::NAN);
                best_epoch = epoch;
                best = (params.clone(), stats.clone());
            }
        }
    }
    Ok(TrainedNet {
        params: best.0,
        stats: best.1,
        trace,
        best_epoch,
        diverged,
    })
}

/// Fraction of training rows held out for early stopping.
pub const HOLDOUT_FRACTION: f64 = 0.1;
const MIN_ROWS_FOR_HOLDOUT: usize = 20;

/// Trained network plus the target scaling needed to produce predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularNet {
    pub config: NetConfig,
    pub net: TrainedNet<f32>,
    /// Regression target standardization (`mean`, `std`).
    pub target_scale: (f64, f64),
}

/// Network inputs: normalized dense columns plus embedded categorical codes.
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a> {
    pub numeric: &'a Array2<f64>,
    pub codes: &'a Array2<u32>,
}

impl TabularNet {
    /// Trains on `data` and early-stops on `holdout`. Without a holdout a
    /// random tenth of the training rows is set aside instead.
    pub fn fit(
        data: NetInput,
        cardinalities: &[u32],
        targets: &Targets,
        holdout: Option<(NetInput, &Targets)>,
        hyper: &NetHyperparameters,
        deadline: &Deadline,
        seed: u64,
    ) -> Result<TabularNet> {
        let n = targets.len();
        let config = NetConfig::new(
            data.numeric.ncols(),
            cardinalities.to_vec(),
            targets.output_dim(),
            !targets.is_classification(),
            *hyper,
        )?;
        let target_scale = match targets {
            Targets::Values(v) => {
                let nf = n.max(1) as f64;
                let mean = v.iter().sum::<f64>() / nf;
                let std = (v.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / nf).sqrt();
                (mean, if std > 1e-12 { std } else { 1.0 })
            }
            _ => (0.0, 1.0),
        };
        let scale = |t: &Targets| match t {
            Targets::Values(v) => Targets::Values(v.iter().map(|y| (y - target_scale.0) / target_scale.1).collect()),
            t => t.clone(),
        };
        let all = NetBatch::<f32>::from_f64(data.numeric, data.codes);
        let targets = scale(targets);
        let net = if let Some((h, ht)) = holdout {
            let hb = NetBatch::<f32>::from_f64(h.numeric, h.codes);
            train(&config, &all, &targets, Some((&hb, &scale(ht))), deadline, seed)?
        } else if n >= MIN_ROWS_FOR_HOLDOUT {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from(seed ^ 0x5eed));
            let held = ((n as f64 * HOLDOUT_FRACTION).ceil() as usize).max(1);
            let (hold_idx, train_idx) = order.split_at(held);
            let mut train_idx = train_idx.to_vec();
            let mut hold_idx = hold_idx.to_vec();
            train_idx.sort_unstable();
            hold_idx.sort_unstable();
            let hold_batch = all.select(&hold_idx);
            let hold_targets = targets.select(&hold_idx);
            train(
                &config,
                &all.select(&train_idx),
                &targets.select(&train_idx),
                Some((&hold_batch, &hold_targets)),
                deadline,
                seed,
            )?
        } else {
            train(&config, &all, &targets, None, deadline, seed)?
        };
        Ok(TabularNet {
            config,
            net,
            target_scale,
        })
    }

    pub fn predict(&self, numeric: &Array2<f64>, codes: &Array2<u32>) -> Array2<f64> {
        let batch = NetBatch::<f32>::from_f64(numeric, codes);
        let out = forward(&self.config, &self.net.params, &self.net.stats, &batch, Mode::Inference);
        if self.config.regression {
            let (mean, std) = self.target_scale;
            out.mapv(|v| v as f64 * std + mean)
        } else {
            softmax_rows(&out).mapv(|v| v as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_dims_follow_formula() {
        assert_eq!(embedding_dim(4).unwrap(), 4);
        assert_eq!(embedding_dim(10).unwrap(), 6);
        assert_eq!(embedding_dim(100).unwrap(), 22);
        assert_eq!(embedding_dim(1_000_000).unwrap(), 100);
        assert!(embedding_dim(3).is_err());
    }

    #[test]
    fn numeric_width_is_clamped() {
        assert_eq!(numeric_embedding_width(1, 10), 32);
        assert_eq!(numeric_embedding_width(0, 3), 0);
        assert_eq!(numeric_embedding_width(1_000_000, 0), MAX_NUMERIC_WIDTH);
    }

    #[test]
    fn hidden_widths_scale_with_classes() {
        assert_eq!(hidden_widths(2, false), (256, 128));
        assert_eq!(hidden_widths(1, true), (256, 128));
        assert_eq!(hidden_widths(25, false), (768, 384));
        assert_eq!(hidden_widths(200, false), (1024, 1024));
    }

    #[test]
    fn untrained_network_is_uniform() {
        let config = NetConfig::new(3, vec![5], 3, false, NetHyperparameters::default()).unwrap();
        let params = NetParams::<f64>::init_for_training(&config, &mut rng_from(1));
        let batch = NetBatch {
            numeric: Array2::from_elem((4, 3), 0.5),
            codes: Array2::from_elem((4, 1), 2u32),
        };
        let p = softmax_rows(&forward(&config, &params, &NormStats::new(&config), &batch, Mode::Inference));
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }
}
