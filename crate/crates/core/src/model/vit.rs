//! Forward and backward passes, batched over frames.
//!
//! Tokens of a batch are stacked into one `(B·S) x d` matrix (`S = M + 1`,
//! class token first for every frame) so the linear layers run as single
//! GEMMs; attention is evaluated per frame and head.

use std::f64::consts::PI;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::preprocess::patchify;
use super::{BlockParams, HeadActivation, ModelConfig, Parameters, Real};
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-6;

struct LnCache<T> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

struct BlockCache<T> {
    ln1: LnCache<T>,
    ln1_out: Array2<T>,
    qkv: Array2<T>,
    /// Attention probabilities, `batch * heads` matrices of `S x S`.
    probs: Vec<Array2<T>>,
    attn_out: Array2<T>,
    proj_mask: Option<Array2<T>>,
    ln2: LnCache<T>,
    ln2_out: Array2<T>,
    fc1_out: Array2<T>,
    gelu_cdf: Array2<T>,
    gelu_out: Array2<T>,
    gelu_mask: Option<Array2<T>>,
    fc2_mask: Option<Array2<T>>,
}

struct Cache<T> {
    times: Vec<usize>,
    patches: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    final_ln: LnCache<T>,
    class_rows: Array2<T>,
}

/// Output of [`forward_batch`], retaining what [`backward`] needs.
pub struct ForwardPass<T> {
    /// `B x o` pre-activation head outputs.
    pub logits: Array2<T>,
    /// `B x o` sigmoid or softmax probabilities.
    pub probs: Array2<T>,
    cache: Cache<T>,
}

fn linear<T: Real>(x: ArrayView2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates `dW += xᵀ·dy`, `db += Σ dy` and returns `dy·Wᵀ`.
fn linear_backward<T: Real>(
    x: ArrayView2<T>,
    w: &Array2<T>,
    dy: ArrayView2<T>,
    dw: &mut Array2<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    general_mat_mul(T::one(), &x.t(), &dy, T::one(), dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn layer_norm<T: Real>(
    x: ArrayView2<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
) -> (Array2<T>, LnCache<T>) {
    let (n, d) = x.dim();
    let inv_d = T::one() / T::of(d as f64);
    let eps = T::of(LN_EPS);
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Array1::zeros(n);
    for (i, row) in x.outer_iter().enumerate() {
        let mean = row.sum() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        Zip::from(xhat.row_mut(i))
            .and(row)
            .for_each(|o, &v| *o = (v - mean) * r);
    }
    let mut y = &xhat * gamma;
    y += beta;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Real>(
    dy: ArrayView2<T>,
    cache: &LnCache<T>,
    gamma: &Array1<T>,
    dgamma: &mut Array1<T>,
    dbeta: &mut Array1<T>,
) -> Array2<T> {
    *dgamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = dy.ncols();
    let inv_d = T::one() / T::of(d as f64);
    let mut dx = &dy * gamma;
    for (i, mut row) in dx.outer_iter_mut().enumerate() {
        let xhat = cache.xhat.row(i);
        let m1 = row.sum() * inv_d;
        let m2 = row.iter().zip(xhat.iter()).map(|(&g, &x)| g * x).sum::<T>() * inv_d;
        let r = cache.rstd[i];
        Zip::from(&mut row)
            .and(xhat)
            .for_each(|g, &x| *g = r * (*g - m1 - x * m2));
    }
    dx
}

/// Standard normal CDF; GELU is `x * normal_cdf(x)`.
fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    half * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Real>(x: T, cdf: T) -> T {
    let pdf = (-(x * x) * T::of(0.5)).exp() * T::of(1.0 / (2.0 * PI).sqrt());
    cdf + x * pdf
}

fn softmax_rows<T: Real>(m: &mut Array2<T>) {
    for mut row in m.outer_iter_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn dropout_mask<T: Real>(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<T> {
    let keep = T::of(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    })
}

/// Probabilities from `B x o` head outputs.
pub fn head_probabilities<T: Real>(logits: ArrayView2<T>, activation: HeadActivation) -> Array2<T> {
    match activation {
        HeadActivation::Sigmoid => logits.mapv(sigmoid),
        HeadActivation::Softmax => {
            let mut p = logits.to_owned();
            softmax_rows(&mut p);
            p
        }
    }
}

fn check_params<T: Real>(params: &Parameters<T>, cfg: &ModelConfig) -> Result<()> {
    let d = cfg.hidden_dim;
    if params.spatial.dim() != (cfg.n_patches(), d)
        || params.temporal.dim() != (cfg.n_timesteps, d)
        || params.patch_weight.dim() != (cfg.patch_dim(), d)
        || params.head_weight.dim() != (cfg.n_classes, d)
        || params.blocks.len() != cfg.n_layers
    {
        return Err(Error::Shape("parameters do not match the model config".into()));
    }
    Ok(())
}

/// Stacked tokens `(B·S) x d` and stacked patches `(B·M) x P²C`.
fn embed<T: Real>(
    params: &Parameters<T>,
    cfg: &ModelConfig,
    images: &[ArrayView3<T>],
    times: &[usize],
) -> Result<(Array2<T>, Array2<T>)> {
    check_params(params, cfg)?;
    if images.len() != times.len() {
        return Err(Error::Shape(format!(
            "{} images but {} time indices",
            images.len(),
            times.len()
        )));
    }
    let (m, s, d) = (cfg.n_patches(), cfg.n_tokens(), cfg.hidden_dim);
    let expected = (cfg.image_size, cfg.image_size, cfg.channels);
    let mut patches = Array2::zeros((images.len() * m, cfg.patch_dim()));
    for (b, (image, &t)) in images.iter().zip(times).enumerate() {
        if t >= cfg.n_timesteps {
            return Err(Error::TimeIndex {
                t,
                n: cfg.n_timesteps,
            });
        }
        if image.dim() != expected {
            return Err(Error::Shape(format!(
                "image {:?}, model expects {expected:?}",
                image.dim()
            )));
        }
        patches
            .slice_mut(s![b * m..(b + 1) * m, ..])
            .assign(&patchify(image.view(), cfg.patch_size)?);
    }
    let projected = linear(patches.view(), &params.patch_weight, &params.patch_bias);
    let mut tokens = Array2::zeros((images.len() * s, d));
    for (b, &t) in times.iter().enumerate() {
        let mut cls = tokens.row_mut(b * s);
        cls.assign(&params.class_token);
        cls += &params.temporal.row(t);
        let mut rows = tokens.slice_mut(s![b * s + 1..(b + 1) * s, ..]);
        rows.assign(&projected.slice(s![b * m..(b + 1) * m, ..]));
        rows += &params.spatial;
    }
    Ok((tokens, patches))
}

fn block_forward<T: Real>(
    bp: &BlockParams<T>,
    cfg: &ModelConfig,
    x: Array2<T>,
    batch: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<T>, BlockCache<T>) {
    let (s, d, dh) = (cfg.n_tokens(), cfg.hidden_dim, cfg.head_dim());
    let p = cfg.dropout;
    let scale = T::of(1.0 / (dh as f64).sqrt());

    let (ln1_out, ln1) = layer_norm(x.view(), &bp.ln1_gamma, &bp.ln1_beta);
    let qkv = linear(ln1_out.view(), &bp.qkv_weight, &bp.qkv_bias);
    let mut attn_out = Array2::zeros((batch * s, d));
    let mut probs = Vec::with_capacity(batch * cfg.n_heads);
    for b in 0..batch {
        let rows = b * s..(b + 1) * s;
        for h in 0..cfg.n_heads {
            let c = h * dh;
            let q = qkv.slice(s![rows.clone(), c..c + dh]);
            let k = qkv.slice(s![rows.clone(), d + c..d + c + dh]);
            let v = qkv.slice(s![rows.clone(), 2 * d + c..2 * d + c + dh]);
            let mut scores = q.dot(&k.t());
            scores *= scale;
            softmax_rows(&mut scores);
            attn_out
                .slice_mut(s![rows.clone(), c..c + dh])
                .assign(&scores.dot(&v));
            probs.push(scores);
        }
    }
    let mut proj = linear(attn_out.view(), &bp.proj_weight, &bp.proj_bias);
    let proj_mask = rng.as_deref_mut().map(|r| dropout_mask(proj.dim(), p, r));
    if let Some(mask) = &proj_mask {
        proj *= mask;
    }
    let x1 = x + proj;

    let (ln2_out, ln2) = layer_norm(x1.view(), &bp.ln2_gamma, &bp.ln2_beta);
    let fc1_out = linear(ln2_out.view(), &bp.fc1_weight, &bp.fc1_bias);
    let gelu_cdf = fc1_out.mapv(normal_cdf);
    let gelu_out = &fc1_out * &gelu_cdf;
    let gelu_mask = rng.as_deref_mut().map(|r| dropout_mask(gelu_out.dim(), p, r));
    let fc2_in = match &gelu_mask {
        Some(mask) => &gelu_out * mask,
        None => gelu_out.clone(),
    };
    let mut fc2_out = linear(fc2_in.view(), &bp.fc2_weight, &bp.fc2_bias);
    let fc2_mask = rng.map(|r| dropout_mask(fc2_out.dim(), p, r));
    if let Some(mask) = &fc2_mask {
        fc2_out *= mask;
    }
    let out = x1 + fc2_out;

    let cache = BlockCache {
        ln1,
        ln1_out,
        qkv,
        probs,
        attn_out,
        proj_mask,
        ln2,
        ln2_out,
        fc1_out,
        gelu_cdf,
        gelu_out,
        gelu_mask,
        fc2_mask,
    };
    (out, cache)
}

fn block_backward<T: Real>(
    bp: &BlockParams<T>,
    grads: &mut BlockParams<T>,
    cfg: &ModelConfig,
    cache: &BlockCache<T>,
    dout: Array2<T>,
    batch: usize,
) -> Array2<T> {
    let (s, d, dh) = (cfg.n_tokens(), cfg.hidden_dim, cfg.head_dim());
    let scale = T::of(1.0 / (dh as f64).sqrt());

    // feed-forward branch
    let mut dfc2 = dout.clone();
    if let Some(mask) = &cache.fc2_mask {
        dfc2 *= mask;
    }
    let fc2_in = match &cache.gelu_mask {
        Some(mask) => &cache.gelu_out * mask,
        None => cache.gelu_out.clone(),
    };
    let mut dgelu = linear_backward(
        fc2_in.view(),
        &bp.fc2_weight,
        dfc2.view(),
        &mut grads.fc2_weight,
        &mut grads.fc2_bias,
    );
    if let Some(mask) = &cache.gelu_mask {
        dgelu *= mask;
    }
    Zip::from(&mut dgelu)
        .and(&cache.fc1_out)
        .and(&cache.gelu_cdf)
        .for_each(|g, &x, &cdf| *g *= gelu_grad(x, cdf));
    let dln2 = linear_backward(
        cache.ln2_out.view(),
        &bp.fc1_weight,
        dgelu.view(),
        &mut grads.fc1_weight,
        &mut grads.fc1_bias,
    );
    let mut dx1 = dout;
    dx1 += &layer_norm_backward(
        dln2.view(),
        &cache.ln2,
        &bp.ln2_gamma,
        &mut grads.ln2_gamma,
        &mut grads.ln2_beta,
    );

    // attention branch
    let mut dproj = dx1.clone();
    if let Some(mask) = &cache.proj_mask {
        dproj *= mask;
    }
    let dattn = linear_backward(
        cache.attn_out.view(),
        &bp.proj_weight,
        dproj.view(),
        &mut grads.proj_weight,
        &mut grads.proj_bias,
    );
    let mut dqkv = Array2::zeros(cache.qkv.dim());
    for b in 0..batch {
        let rows = b * s..(b + 1) * s;
        for h in 0..cfg.n_heads {
            let c = h * dh;
            let probs = &cache.probs[b * cfg.n_heads + h];
            let q = cache.qkv.slice(s![rows.clone(), c..c + dh]);
            let k = cache.qkv.slice(s![rows.clone(), d + c..d + c + dh]);
            let v = cache.qkv.slice(s![rows.clone(), 2 * d + c..2 * d + c + dh]);
            let dhead = dattn.slice(s![rows.clone(), c..c + dh]);

            let dprobs = dhead.dot(&v.t());
            let dv = probs.t().dot(&dhead);
            let mut dscores = &dprobs * probs;
            let row_dot = dscores.sum_axis(Axis(1));
            Zip::from(dscores.rows_mut())
                .and(probs.rows())
                .and(&row_dot)
                .for_each(|mut ds, p, &r| {
                    Zip::from(&mut ds).and(&p).for_each(|g, &pv| *g -= pv * r);
                });
            dscores *= scale;
            dqkv.slice_mut(s![rows.clone(), c..c + dh])
                .assign(&dscores.dot(&k));
            dqkv.slice_mut(s![rows.clone(), d + c..d + c + dh])
                .assign(&dscores.t().dot(&q));
            dqkv.slice_mut(s![rows.clone(), 2 * d + c..2 * d + c + dh])
                .assign(&dv);
        }
    }
    let dln1 = linear_backward(
        cache.ln1_out.view(),
        &bp.qkv_weight,
        dqkv.view(),
        &mut grads.qkv_weight,
        &mut grads.qkv_bias,
    );
    let mut dx = dx1;
    dx += &layer_norm_backward(
        dln1.view(),
        &cache.ln1,
        &bp.ln1_gamma,
        &mut grads.ln1_gamma,
        &mut grads.ln1_beta,
    );
    dx
}

fn encode_tokens<T: Real>(
    params: &Parameters<T>,
    cfg: &ModelConfig,
    tokens: Array2<T>,
    batch: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<T>, Vec<BlockCache<T>>, LnCache<T>) {
    let active = cfg.dropout > 0.0;
    let mut x = tokens;
    let mut caches = Vec::with_capacity(params.blocks.len());
    for bp in &params.blocks {
        let r = if active { rng.as_deref_mut() } else { None };
        let (out, cache) = block_forward(bp, cfg, x, batch, r);
        x = out;
        caches.push(cache);
    }
    let (h, final_ln) = layer_norm(x.view(), &params.norm_gamma, &params.norm_beta);
    (h, caches, final_ln)
}

fn head_logits<T: Real>(params: &Parameters<T>, class_rows: ArrayView2<T>) -> Array2<T> {
    let mut logits = class_rows.dot(&params.head_weight.t());
    logits += &params.head_bias;
    logits
}

/// Batched forward pass. Dropout is active iff `rng` is given and the
/// configured rate is non-zero.
pub fn forward_batch<T: Real>(
    params: &Parameters<T>,
    cfg: &ModelConfig,
    images: &[ArrayView3<T>],
    times: &[usize],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass<T>> {
    let batch = images.len();
    let s = cfg.n_tokens();
    let (tokens, patches) = embed(params, cfg, images, times)?;
    let (h, blocks, final_ln) = encode_tokens(params, cfg, tokens, batch, rng);
    let class_rows = h.select(Axis(0), &(0..batch).map(|b| b * s).collect::<Vec<_>>());
    let logits = head_logits(params, class_rows.view());
    let probs = head_probabilities(logits.view(), cfg.head_activation);
    Ok(ForwardPass {
        logits,
        probs,
        cache: Cache {
            times: times.to_vec(),
            patches,
            blocks,
            final_ln,
            class_rows,
        },
    })
}

/// Gradients of a scalar loss with respect to every parameter, given
/// `dloss/dlogits` (`B x o`) for a pass produced by [`forward_batch`].
pub fn backward<T: Real>(
    params: &Parameters<T>,
    cfg: &ModelConfig,
    pass: &ForwardPass<T>,
    dlogits: ArrayView2<T>,
) -> Parameters<T> {
    let cache = &pass.cache;
    let batch = cache.times.len();
    let (m, s, d) = (cfg.n_patches(), cfg.n_tokens(), cfg.hidden_dim);
    let mut grads = Parameters::zeros(cfg);

    general_mat_mul(
        T::one(),
        &dlogits.t(),
        &cache.class_rows,
        T::one(),
        &mut grads.head_weight,
    );
    grads.head_bias += &dlogits.sum_axis(Axis(0));
    let dclass = dlogits.dot(&params.head_weight);

    let mut dh = Array2::zeros((batch * s, d));
    for b in 0..batch {
        dh.row_mut(b * s).assign(&dclass.row(b));
    }
    let mut dx = layer_norm_backward(
        dh.view(),
        &cache.final_ln,
        &params.norm_gamma,
        &mut grads.norm_gamma,
        &mut grads.norm_beta,
    );
    for (i, bc) in cache.blocks.iter().enumerate().rev() {
        dx = block_backward(&params.blocks[i], &mut grads.blocks[i], cfg, bc, dx, batch);
    }

    let mut dprojected = Array2::zeros((batch * m, d));
    for (b, &t) in cache.times.iter().enumerate() {
        let dcls = dx.row(b * s);
        grads.class_token += &dcls;
        let mut trow = grads.temporal.row_mut(t);
        trow += &dcls;
        let dpatch = dx.slice(s![b * s + 1..(b + 1) * s, ..]);
        grads.spatial += &dpatch;
        dprojected.slice_mut(s![b * m..(b + 1) * m, ..]).assign(&dpatch);
    }
    general_mat_mul(
        T::one(),
        &cache.patches.t(),
        &dprojected,
        T::one(),
        &mut grads.patch_weight,
    );
    grads.patch_bias += &dprojected.sum_axis(Axis(0));
    grads
}

/// Token matrix `z_t` of one frame: row 0 is `class_token + temporal[t]`,
/// row `i` is the projected patch `i` plus `spatial[i]`.
pub fn embed_frame<T: Real>(
    image: ArrayView3<T>,
    t: usize,
    params: &Parameters<T>,
    cfg: &ModelConfig,
) -> Result<Array2<T>> {
    Ok(embed(params, cfg, &[image], &[t])?.0)
}

/// Pre-norm encoder over one frame's tokens, including the final layer norm.
pub fn encode<T: Real>(
    tokens: ArrayView2<T>,
    params: &Parameters<T>,
    cfg: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Array2<T>> {
    check_params(params, cfg)?;
    if tokens.dim() != (cfg.n_tokens(), cfg.hidden_dim) {
        return Err(Error::Shape(format!(
            "tokens {:?}, expected {:?}",
            tokens.dim(),
            (cfg.n_tokens(), cfg.hidden_dim)
        )));
    }
    Ok(encode_tokens(params, cfg, tokens.to_owned(), 1, rng).0)
}

/// Head on the class-token row of an encoded frame.
pub fn classify<T: Real>(
    h: ArrayView2<T>,
    params: &Parameters<T>,
    cfg: &ModelConfig,
) -> Result<Array1<T>> {
    if h.ncols() != cfg.hidden_dim || h.nrows() == 0 {
        return Err(Error::Shape(format!("representation {:?}", h.dim())));
    }
    let class_row: ArrayView1<T> = h.row(0);
    let logits = head_logits(params, class_row.insert_axis(Axis(0)));
    Ok(head_probabilities(logits.view(), cfg.head_activation).row(0).to_owned())
}

/// Probabilities `y_t` for one frame at time index `t`.
pub fn forward<T: Real>(
    image: ArrayView3<T>,
    t: usize,
    params: &Parameters<T>,
    cfg: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Array1<T>> {
    let tokens = embed_frame(image, t, params, cfg)?;
    let h = encode(tokens.view(), params, cfg, rng)?;
    classify(h.view(), params, cfg)
}
