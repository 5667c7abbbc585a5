//! Forward pass with activation cache and the mirrored backward pass.
//!
//! Architecture per forward call (one month, N asset tokens, width E):
//!
//! 1. each scalar noisy return is embedded by an affine map into E;
//! 2. a sinusoidal embedding of the diffusion step runs through a
//!    two-layer SiLU net; each token's characteristics run through
//!    another two-layer SiLU net; their sum is the token's conditioning
//!    vector `c_i`;
//! 3. every transformer block reads `silu(c_i)` through a linear
//!    modulation head producing per-token (shift, scale, gate) for the
//!    attention sublayer and the feed-forward sublayer; layer norms
//!    carry no learned affine; attention is full bidirectional
//!    multi-head over the N tokens; the feed-forward uses a 4E hidden
//!    layer with tanh-approximated GELU;
//! 4. a final modulated layer norm and a linear head map each token
//!    back to one scalar.
//!
//! No positional embeddings anywhere, so the whole map is exactly
//! permutation-equivariant over tokens. The modulation heads and the
//! output head are zero-initialized, making a fresh network the zero
//! function.
//!
//! The backward pass consumes the cache in reverse and accumulates
//! exact analytic gradients for every segment of the flat parameter
//! vector; reductions run in fixed order for reproducibility.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Mat};

use super::layout::{Cursor, Layout};
use super::DenoiserConfig;

const LN_EPS: f64 = 1e-5;

/// Resolved segment ranges of one transformer block.
pub(super) struct BlockSegs {
    pub modulation_w: Range<usize>,
    pub modulation_b: Range<usize>,
    pub wq_w: Range<usize>,
    pub wq_b: Range<usize>,
    pub wk_w: Range<usize>,
    pub wk_b: Range<usize>,
    pub wv_w: Range<usize>,
    pub wv_b: Range<usize>,
    pub wo_w: Range<usize>,
    pub wo_b: Range<usize>,
    pub fc1_w: Range<usize>,
    pub fc1_b: Range<usize>,
    pub fc2_w: Range<usize>,
    pub fc2_b: Range<usize>,
}

/// All segment ranges in layout order.
pub(super) struct Segments {
    pub token_w: Range<usize>,
    pub token_b: Range<usize>,
    pub time1_w: Range<usize>,
    pub time1_b: Range<usize>,
    pub time2_w: Range<usize>,
    pub time2_b: Range<usize>,
    pub cond1_w: Range<usize>,
    pub cond1_b: Range<usize>,
    pub cond2_w: Range<usize>,
    pub cond2_b: Range<usize>,
    pub blocks: Vec<BlockSegs>,
    pub final_mod_w: Range<usize>,
    pub final_mod_b: Range<usize>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
}

impl Segments {
    pub(super) fn resolve(layout: &Layout, layers: usize) -> Segments {
        let mut cur = Cursor::new(layout);
        let token_w = cur.take("token_embed.weight");
        let token_b = cur.take("token_embed.bias");
        let time1_w = cur.take("time_embed.fc1.weight");
        let time1_b = cur.take("time_embed.fc1.bias");
        let time2_w = cur.take("time_embed.fc2.weight");
        let time2_b = cur.take("time_embed.fc2.bias");
        let cond1_w = cur.take("cond_embed.fc1.weight");
        let cond1_b = cur.take("cond_embed.fc1.bias");
        let cond2_w = cur.take("cond_embed.fc2.weight");
        let cond2_b = cur.take("cond_embed.fc2.bias");
        let mut blocks = Vec::with_capacity(layers);
        for _ in 0..layers {
            blocks.push(BlockSegs {
                modulation_w: cur.take("modulation.weight"),
                modulation_b: cur.take("modulation.bias"),
                wq_w: cur.take("wq.weight"),
                wq_b: cur.take("wq.bias"),
                wk_w: cur.take("wk.weight"),
                wk_b: cur.take("wk.bias"),
                wv_w: cur.take("wv.weight"),
                wv_b: cur.take("wv.bias"),
                wo_w: cur.take("wo.weight"),
                wo_b: cur.take("wo.bias"),
                fc1_w: cur.take("mlp.fc1.weight"),
                fc1_b: cur.take("mlp.fc1.bias"),
                fc2_w: cur.take("mlp.fc2.weight"),
                fc2_b: cur.take("mlp.fc2.bias"),
            });
        }
        Segments {
            token_w,
            token_b,
            time1_w,
            time1_b,
            time2_w,
            time2_b,
            cond1_w,
            cond1_b,
            cond2_w,
            cond2_b,
            blocks,
            final_mod_w: cur.take("final.modulation.weight"),
            final_mod_b: cur.take("final.modulation.bias"),
            head_w: cur.take("final.head.weight"),
            head_b: cur.take("final.head.bias"),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn dsilu(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn dgelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        *v = f(*v);
    }
    out
}

/// `y = x W^T + b` for row-major `W` of shape `out_dim x in_dim`.
fn linear(w: &[f64], b: &[f64], x: &Mat) -> Mat {
    let n = x.rows();
    let in_dim = x.cols();
    let out_dim = b.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    let mut y = Mat::zeros(n, out_dim);
    for r in 0..n {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for o in 0..out_dim {
            yr[o] = dot(&w[o * in_dim..(o + 1) * in_dim], xr) + b[o];
        }
    }
    y
}

/// Accumulates `dw += dy^T x` and `db += sum_rows dy` into the
/// respective segments of `grad`, and `dx += dy W`.
fn linear_backward(
    w: &[f64],
    x: &Mat,
    dy: &Mat,
    grad: &mut [f64],
    w_range: &Range<usize>,
    b_range: &Range<usize>,
    dx: &mut Mat,
) {
    let n = x.rows();
    let in_dim = x.cols();
    let out_dim = dy.cols();
    debug_assert_eq!(dx.rows(), n);
    debug_assert_eq!(dx.cols(), in_dim);
    debug_assert_eq!(w_range.len(), out_dim * in_dim);
    debug_assert_eq!(b_range.len(), out_dim);
    for r in 0..n {
        let xr = x.row(r);
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for o in 0..out_dim {
            let g = dyr[o];
            if g == 0.0 {
                continue;
            }
            grad[b_range.start + o] += g;
            let w_at = w_range.start + o * in_dim;
            axpy(g, xr, &mut grad[w_at..w_at + in_dim]);
            axpy(g, &w[o * in_dim..(o + 1) * in_dim], dxr);
        }
    }
}

/// Sinusoidal step embedding: cosines in the first half, sines in the
/// second, geometric frequencies down to 1/10000.
fn sinusoidal_embedding(step: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut pe = vec![0.0; dim];
    for j in 0..half {
        let freq = (-(10_000f64).ln() * j as f64 / half as f64).exp();
        let arg = step as f64 * freq;
        pe[j] = arg.cos();
        pe[half + j] = arg.sin();
    }
    pe
}

/// Row-wise layer norm without affine; returns (normalized, rstd).
fn layer_norm(x: &Mat) -> (Mat, Vec<f64>) {
    let n = x.rows();
    let e = x.cols();
    let mut y = Mat::zeros(n, e);
    let mut rstds = Vec::with_capacity(n);
    for r in 0..n {
        let xr = x.row(r);
        let mean = xr.iter().sum::<f64>() / e as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        for (out, v) in y.row_mut(r).iter_mut().zip(xr.iter()) {
            *out = (v - mean) * rstd;
        }
        rstds.push(rstd);
    }
    (y, rstds)
}

/// Accumulates the layer-norm input gradient for one row:
/// `dx += rstd * (dy - mean(dy) - y * mean(dy . y))`.
fn layer_norm_backward_row(dy: &[f64], y: &[f64], rstd: f64, dx: &mut [f64]) {
    let e = dy.len() as f64;
    let s1 = dy.iter().sum::<f64>() / e;
    let s2 = dot(dy, y) / e;
    for ((dxk, &dyk), &yk) in dx.iter_mut().zip(dy.iter()).zip(y.iter()) {
        *dxk += rstd * (dyk - s1 - yk * s2);
    }
}

/// `out = y * (1 + scale) + shift`, per token, slices taken from the
/// modulation matrix rows.
fn modulate(y: &Mat, m: &Mat, shift_at: usize, scale_at: usize) -> Mat {
    let e = y.cols();
    let mut out = Mat::zeros(y.rows(), e);
    for r in 0..y.rows() {
        let mr = m.row(r);
        let shift = &mr[shift_at..shift_at + e];
        let scale = &mr[scale_at..scale_at + e];
        for d in 0..e {
            out.row_mut(r)[d] = y.row(r)[d] * (1.0 + scale[d]) + shift[d];
        }
    }
    out
}

/// Multi-head attention forward; returns the concatenated head outputs
/// and the per-head softmax probabilities.
fn attention(q: &Mat, k: &Mat, v: &Mat, heads: usize) -> (Mat, Vec<Mat>) {
    let n = q.rows();
    let e = q.cols();
    let dh = e / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut concat = Mat::zeros(n, e);
    let mut all_probs = Vec::with_capacity(heads);
    let mut scores = Mat::zeros(n, n);
    for h in 0..heads {
        let lo = h * dh;
        let hi = lo + dh;
        for i in 0..n {
            let qi = &q.row(i)[lo..hi];
            for j in 0..n {
                scores[(i, j)] = scale * dot(qi, &k.row(j)[lo..hi]);
            }
        }
        let mut probs = Mat::zeros(n, n);
        for i in 0..n {
            let row = scores.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut denom = 0.0;
            for j in 0..n {
                let p = (row[j] - max).exp();
                probs[(i, j)] = p;
                denom += p;
            }
            for j in 0..n {
                probs[(i, j)] /= denom;
            }
            for j in 0..n {
                let p = probs[(i, j)];
                if p != 0.0 {
                    axpy(p, &v.row(j)[lo..hi], &mut concat.row_mut(i)[lo..hi]);
                }
            }
        }
        all_probs.push(probs);
    }
    (concat, all_probs)
}

/// Gradients of [`attention`] with respect to q, k, v.
fn attention_backward(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    probs: &[Mat],
    d_concat: &Mat,
    heads: usize,
) -> (Mat, Mat, Mat) {
    let n = q.rows();
    let e = q.cols();
    let dh = e / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Mat::zeros(n, e);
    let mut dk = Mat::zeros(n, e);
    let mut dv = Mat::zeros(n, e);
    let mut dscores = Mat::zeros(n, n);
    for h in 0..heads {
        let lo = h * dh;
        let hi = lo + dh;
        let p = &probs[h];
        for i in 0..n {
            let doh = &d_concat.row(i)[lo..hi];
            // dv_j += p_ij * do_i ; dp_ij = do_i . v_j
            let mut dp_dot_p = 0.0;
            for j in 0..n {
                let pij = p[(i, j)];
                if pij != 0.0 {
                    axpy(pij, doh, &mut dv.row_mut(j)[lo..hi]);
                }
                let dpij = dot(doh, &v.row(j)[lo..hi]);
                dscores[(i, j)] = dpij;
                dp_dot_p += dpij * pij;
            }
            // softmax backward: ds = p . (dp - <dp, p>)
            for j in 0..n {
                dscores[(i, j)] = p[(i, j)] * (dscores[(i, j)] - dp_dot_p);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let ds = scale * dscores[(i, j)];
                if ds == 0.0 {
                    continue;
                }
                axpy(ds, &k.row(j)[lo..hi], &mut dq.row_mut(i)[lo..hi]);
                axpy(ds, &q.row(i)[lo..hi], &mut dk.row_mut(j)[lo..hi]);
            }
        }
    }
    (dq, dk, dv)
}

pub(super) struct LnCache {
    y: Mat,
    rstd: Vec<f64>,
}

pub(super) struct BlockCache {
    m: Mat,
    ln1: LnCache,
    yh1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    attn_concat: Mat,
    attn_out: Mat,
    ln2: LnCache,
    yh2: Mat,
    fc1_pre: Mat,
    fc1_act: Mat,
    fc2_out: Mat,
}

pub(super) struct Cache {
    noisy: Vec<f64>,
    pe: Vec<f64>,
    time1_pre: Vec<f64>,
    time1_act: Vec<f64>,
    cond1_pre: Mat,
    cond1_act: Mat,
    c: Mat,
    am: Mat,
    blocks: Vec<BlockCache>,
    mf: Mat,
    lnf: LnCache,
    yhf: Mat,
}

fn finite_or(name: &str, values: &[f64]) -> Result<()> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite value {bad} in {name}")));
    }
    Ok(())
}

pub(super) fn forward_cache(
    flat: &[f64],
    segs: &Segments,
    noisy: &[f64],
    step: usize,
    cond: &Mat,
    config: &DenoiserConfig,
) -> Result<(Vec<f64>, Cache)> {
    let n = noisy.len();
    let e = config.embed_dim;
    if step == 0 || step > config.max_steps {
        return Err(Error::domain(format!(
            "step {step} outside [1, {}]",
            config.max_steps
        )));
    }
    if cond.rows() != n {
        return Err(Error::shape(format!(
            "conditioning has {} rows for {n} tokens",
            cond.rows()
        )));
    }
    if cond.cols() != config.k {
        return Err(Error::shape(format!(
            "conditioning has {} columns, config expects k = {}",
            cond.cols(),
            config.k
        )));
    }
    finite_or("noisy returns", noisy)?;

    let seg = |r: &Range<usize>| &flat[r.clone()];

    // Timestep pathway (shared by all tokens).
    let pe = sinusoidal_embedding(step, e);
    let pe_mat = Mat::from_vec(1, e, pe.clone())?;
    let time1_pre_mat = linear(seg(&segs.time1_w), seg(&segs.time1_b), &pe_mat);
    let time1_act_mat = map(&time1_pre_mat, silu);
    let t_emb = linear(seg(&segs.time2_w), seg(&segs.time2_b), &time1_act_mat);

    // Characteristic pathway (per token).
    let cond1_pre = linear(seg(&segs.cond1_w), seg(&segs.cond1_b), cond);
    let cond1_act = map(&cond1_pre, silu);
    let u = linear(seg(&segs.cond2_w), seg(&segs.cond2_b), &cond1_act);

    // Conditioning vector and its SiLU, shared by every modulation head.
    let mut c = u;
    for r in 0..n {
        axpy(1.0, t_emb.row(0), c.row_mut(r));
    }
    let am = map(&c, silu);

    // Token embedding of the scalar returns.
    let token_w = seg(&segs.token_w);
    let token_b = seg(&segs.token_b);
    let mut h = Mat::zeros(n, e);
    for i in 0..n {
        let hr = h.row_mut(i);
        for d in 0..e {
            hr[d] = token_w[d] * noisy[i] + token_b[d];
        }
    }

    let mut blocks = Vec::with_capacity(segs.blocks.len());
    for (l, bs) in segs.blocks.iter().enumerate() {
        let m = linear(seg(&bs.modulation_w), seg(&bs.modulation_b), &am);
        let (y1, rstd1) = layer_norm(&h);
        let yh1 = modulate(&y1, &m, 0, e);
        let q = linear(seg(&bs.wq_w), seg(&bs.wq_b), &yh1);
        let k = linear(seg(&bs.wk_w), seg(&bs.wk_b), &yh1);
        let v = linear(seg(&bs.wv_w), seg(&bs.wv_b), &yh1);
        let (attn_concat, probs) = attention(&q, &k, &v, config.heads);
        let attn_out = linear(seg(&bs.wo_w), seg(&bs.wo_b), &attn_concat);
        for r in 0..n {
            let gate = &m.row(r)[2 * e..3 * e];
            let src = attn_out.row(r);
            let dst = h.row_mut(r);
            for d in 0..e {
                dst[d] += gate[d] * src[d];
            }
        }

        let (y2, rstd2) = layer_norm(&h);
        let yh2 = modulate(&y2, &m, 3 * e, 4 * e);
        let fc1_pre = linear(seg(&bs.fc1_w), seg(&bs.fc1_b), &yh2);
        let fc1_act = map(&fc1_pre, gelu);
        let fc2_out = linear(seg(&bs.fc2_w), seg(&bs.fc2_b), &fc1_act);
        for r in 0..n {
            let gate = &m.row(r)[5 * e..6 * e];
            let src = fc2_out.row(r);
            let dst = h.row_mut(r);
            for d in 0..e {
                dst[d] += gate[d] * src[d];
            }
        }
        finite_or(&format!("block {l}"), h.as_slice())?;

        blocks.push(BlockCache {
            m,
            ln1: LnCache { y: y1, rstd: rstd1 },
            yh1,
            q,
            k,
            v,
            probs,
            attn_concat,
            attn_out,
            ln2: LnCache { y: y2, rstd: rstd2 },
            yh2,
            fc1_pre,
            fc1_act,
            fc2_out,
        });
    }

    let mf = linear(seg(&segs.final_mod_w), seg(&segs.final_mod_b), &am);
    let (yf, rstdf) = layer_norm(&h);
    let yhf = modulate(&yf, &mf, 0, e);
    let head_w = seg(&segs.head_w);
    let head_b = seg(&segs.head_b)[0];
    let out: Vec<f64> = (0..n).map(|i| dot(head_w, yhf.row(i)) + head_b).collect();
    finite_or("output head", &out)?;

    let cache = Cache {
        noisy: noisy.to_vec(),
        pe,
        time1_pre: time1_pre_mat.row(0).to_vec(),
        time1_act: time1_act_mat.row(0).to_vec(),
        cond1_pre,
        cond1_act,
        c,
        am,
        blocks,
        mf,
        lnf: LnCache { y: yf, rstd: rstdf },
        yhf,
    };
    Ok((out, cache))
}

/// Accumulates the exact gradient of a scalar loss with output gradient
/// `d_out` into `grad` (same layout as the flat parameter vector).
pub(super) fn backward(
    flat: &[f64],
    segs: &Segments,
    cache: &Cache,
    cond: &Mat,
    d_out: &[f64],
    config: &DenoiserConfig,
    grad: &mut [f64],
) {
    let n = cache.noisy.len();
    let e = config.embed_dim;
    debug_assert_eq!(d_out.len(), n);
    debug_assert_eq!(grad.len(), flat.len());

    let seg = |r: &Range<usize>| &flat[r.clone()];

    // Output head: out_i = head_w . yhf_i + head_b.
    let head_w = seg(&segs.head_w).to_vec();
    let mut d_yhf = Mat::zeros(n, e);
    {
        let (head_w_grad, head_b_grad) = (segs.head_w.clone(), segs.head_b.clone());
        for i in 0..n {
            let g = d_out[i];
            if g != 0.0 {
                axpy(g, cache.yhf.row(i), &mut grad[head_w_grad.clone()]);
                grad[head_b_grad.start] += g;
                axpy(g, &head_w, d_yhf.row_mut(i));
            }
        }
    }

    // Final modulated layer norm.
    let mut d_h = Mat::zeros(n, e);
    let mut d_mf = Mat::zeros(n, 2 * e);
    for i in 0..n {
        let mr = cache.mf.row(i);
        let scale = &mr[e..2 * e];
        let y = cache.lnf.y.row(i);
        let dyh = d_yhf.row(i);
        let mut dy = vec![0.0; e];
        for d in 0..e {
            dy[d] = dyh[d] * (1.0 + scale[d]);
            d_mf.row_mut(i)[d] = dyh[d]; // shift gradient
            d_mf.row_mut(i)[e + d] = dyh[d] * y[d]; // scale gradient
        }
        layer_norm_backward_row(&dy, y, cache.lnf.rstd[i], d_h.row_mut(i));
    }
    let mut d_am = Mat::zeros(n, e);
    linear_backward(
        seg(&segs.final_mod_w),
        &cache.am,
        &d_mf,
        grad,
        &segs.final_mod_w,
        &segs.final_mod_b,
        &mut d_am,
    );

    // Blocks in reverse; d_h enters as the gradient at the block output.
    for (bs, bc) in segs.blocks.iter().zip(cache.blocks.iter()).rev() {
        // h_out = h_mid + gate2 * fc2_out
        let mut d_fc2 = Mat::zeros(n, e);
        let mut d_m = Mat::zeros(n, 6 * e);
        for i in 0..n {
            let mr = bc.m.row(i);
            let gate2 = &mr[5 * e..6 * e];
            let dhr = d_h.row(i);
            let f2 = bc.fc2_out.row(i);
            for d in 0..e {
                d_fc2.row_mut(i)[d] = dhr[d] * gate2[d];
                d_m.row_mut(i)[5 * e + d] = dhr[d] * f2[d];
            }
        }
        let mut d_fc1_act = Mat::zeros(n, 4 * e);
        linear_backward(
            seg(&bs.fc2_w),
            &bc.fc1_act,
            &d_fc2,
            grad,
            &bs.fc2_w,
            &bs.fc2_b,
            &mut d_fc1_act,
        );
        let mut d_fc1 = d_fc1_act;
        for (dv, pre) in d_fc1
            .as_mut_slice()
            .iter_mut()
            .zip(bc.fc1_pre.as_slice().iter())
        {
            *dv *= dgelu(*pre);
        }
        let mut d_yh2 = Mat::zeros(n, e);
        linear_backward(
            seg(&bs.fc1_w),
            &bc.yh2,
            &d_fc1,
            grad,
            &bs.fc1_w,
            &bs.fc1_b,
            &mut d_yh2,
        );
        // Modulated LN 2; its input gradient adds to d_h (residual).
        for i in 0..n {
            let mr = bc.m.row(i);
            let scale = &mr[4 * e..5 * e];
            let y = bc.ln2.y.row(i);
            let dyh = d_yh2.row(i);
            let mut dy = vec![0.0; e];
            for d in 0..e {
                dy[d] = dyh[d] * (1.0 + scale[d]);
                d_m.row_mut(i)[3 * e + d] = dyh[d];
                d_m.row_mut(i)[4 * e + d] = dyh[d] * y[d];
            }
            layer_norm_backward_row(&dy, y, bc.ln2.rstd[i], d_h.row_mut(i));
        }

        // h_mid = h_in + gate1 * attn_out
        let mut d_attn_out = Mat::zeros(n, e);
        for i in 0..n {
            let mr = bc.m.row(i);
            let gate1 = &mr[2 * e..3 * e];
            let dhr = d_h.row(i);
            let ao = bc.attn_out.row(i);
            for d in 0..e {
                d_attn_out.row_mut(i)[d] = dhr[d] * gate1[d];
                d_m.row_mut(i)[2 * e + d] = dhr[d] * ao[d];
            }
        }
        let mut d_concat = Mat::zeros(n, e);
        linear_backward(
            seg(&bs.wo_w),
            &bc.attn_concat,
            &d_attn_out,
            grad,
            &bs.wo_w,
            &bs.wo_b,
            &mut d_concat,
        );
        let (dq, dk, dv) = attention_backward(&bc.q, &bc.k, &bc.v, &bc.probs, &d_concat, config.heads);
        let mut d_yh1 = Mat::zeros(n, e);
        linear_backward(seg(&bs.wq_w), &bc.yh1, &dq, grad, &bs.wq_w, &bs.wq_b, &mut d_yh1);
        linear_backward(seg(&bs.wk_w), &bc.yh1, &dk, grad, &bs.wk_w, &bs.wk_b, &mut d_yh1);
        linear_backward(seg(&bs.wv_w), &bc.yh1, &dv, grad, &bs.wv_w, &bs.wv_b, &mut d_yh1);
        // Modulated LN 1.
        for i in 0..n {
            let mr = bc.m.row(i);
            let scale = &mr[e..2 * e];
            let y = bc.ln1.y.row(i);
            let dyh = d_yh1.row(i);
            let mut dy = vec![0.0; e];
            for d in 0..e {
                dy[d] = dyh[d] * (1.0 + scale[d]);
                d_m.row_mut(i)[d] = dyh[d];
                d_m.row_mut(i)[e + d] = dyh[d] * y[d];
            }
            layer_norm_backward_row(&dy, y, bc.ln1.rstd[i], d_h.row_mut(i));
        }
        // Modulation head of this block.
        linear_backward(
            seg(&bs.modulation_w),
            &cache.am,
            &d_m,
            grad,
            &bs.modulation_w,
            &bs.modulation_b,
            &mut d_am,
        );
    }

    // Token embedding: h0_i = token_w * x_i + token_b.
    {
        let tw = segs.token_w.clone();
        let tb = segs.token_b.clone();
        for i in 0..n {
            let dhr = d_h.row(i);
            axpy(cache.noisy[i], dhr, &mut grad[tw.clone()]);
            axpy(1.0, dhr, &mut grad[tb.clone()]);
        }
    }

    // Conditioning: c feeds every modulation head through silu.
    let mut d_c = d_am;
    for (dv, pre) in d_c
        .as_mut_slice()
        .iter_mut()
        .zip(cache.c.as_slice().iter())
    {
        *dv *= dsilu(*pre);
    }
    // Timestep embedding receives the token-summed gradient.
    let mut d_t_emb = Mat::zeros(1, e);
    for i in 0..n {
        axpy(1.0, d_c.row(i), d_t_emb.row_mut(0));
    }
    // Characteristic pathway.
    let mut d_cond1_act = Mat::zeros(n, e);
    linear_backward(
        seg(&segs.cond2_w),
        &cache.cond1_act,
        &d_c,
        grad,
        &segs.cond2_w,
        &segs.cond2_b,
        &mut d_cond1_act,
    );
    let mut d_cond1 = d_cond1_act;
    for (dv, pre) in d_cond1
        .as_mut_slice()
        .iter_mut()
        .zip(cache.cond1_pre.as_slice().iter())
    {
        *dv *= dsilu(*pre);
    }
    let mut d_cond_input = Mat::zeros(n, config.k);
    linear_backward(
        seg(&segs.cond1_w),
        cond,
        &d_cond1,
        grad,
        &segs.cond1_w,
        &segs.cond1_b,
        &mut d_cond_input,
    );

    // Timestep pathway.
    let time1_act_mat = Mat::from_vec(1, e, cache.time1_act.clone()).expect("1xe");
    let mut d_time1_act = Mat::zeros(1, e);
    linear_backward(
        seg(&segs.time2_w),
        &time1_act_mat,
        &d_t_emb,
        grad,
        &segs.time2_w,
        &segs.time2_b,
        &mut d_time1_act,
    );
    let mut d_time1 = d_time1_act;
    for (dv, pre) in d_time1
        .as_mut_slice()
        .iter_mut()
        .zip(cache.time1_pre.iter())
    {
        *dv *= dsilu(*pre);
    }
    let pe_mat = Mat::from_vec(1, e, cache.pe.clone()).expect("1xe");
    let mut d_pe = Mat::zeros(1, e);
    linear_backward(
        seg(&segs.time1_w),
        &pe_mat,
        &d_time1,
        grad,
        &segs.time1_w,
        &segs.time1_b,
        &mut d_pe,
    );
}
