//! Adapter operators, written once against [`Backend`].
//!
//! Round budget per adapter: 9 linear layers, 2 share-by-share matmuls, two
//! 3-round LayerNorms and one 9-round ReLU, 26 in total. The pipeline tail
//! adds a 2-round LayerNorm on the class token and the classifier.

use super::backend::{Backend, FixedPlain, Layout, RealPlain, RealTensor};
use super::params::{AdapterParams, PipelineParams};
use super::rsqrt::RsqrtPoly;
use super::AdapterConfig;
use crate::error::{Error, Result};
use crate::ring::FixedTensor;
use crate::sharing::convert::ltz;
use crate::sharing::{ArithShare, Product, Session};

/// Added to the variance before the inverse square root.
pub const LN_EPS: f64 = 1e-5;

/// Rounds used by one adapter.
pub const ADAPTER_ROUNDS: u64 = 26;
/// Rounds used by the tail norm and classifier.
pub const TAIL_ROUNDS: u64 = 3;

/// `x W (+ bias)`, one round.
pub fn linear<B: Backend>(b: &mut B, x: &B::T, w: &B::T, bias: Option<&B::T>) -> Result<B::T> {
    let y = b.products(&[(Product::Matmul, x, w)], "linear")?.remove(0);
    match bias {
        None => Ok(y),
        Some(bias) => {
            let rows = y.shape()[0];
            let bias = bias.relayout(|t| t.broadcast_rows(rows))?;
            b.add(&y, &bias)
        }
    }
}

fn matrix_dims(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match *shape {
        [n, d] => Ok((n, d)),
        _ => Err(Error::shape(op, shape, &[])),
    }
}

/// Row-wise LayerNorm over `[N, d]` with a polynomial inverse square root;
/// `rounds` is 3 (cubic) or 2 (affine).
pub fn layernorm<B: Backend>(b: &mut B, x: &B::T, gain: &B::T, bias: &B::T, rounds: u32) -> Result<B::T> {
    let poly = RsqrtPoly::for_budget(rounds)?;
    let (n, d) = matrix_dims(x.shape(), "layernorm")?;
    if d < 2 {
        return Err(Error::shape("layernorm", x.shape(), &[2]));
    }
    let k = poly.coeffs();
    let inv_d = 1.0 / d as f64;
    b.scope("layernorm", |b| {
        let mean = b.scale(&x.sum_last(), inv_d)?;
        let c = b.sub(x, &mean.relayout(|t| t.broadcast_last(d))?)?;
        let g = gain.relayout(|t| t.broadcast_rows(n))?;
        let mut r1 = b.products(&[(Product::Elementwise, &c, &c), (Product::Elementwise, &c, &g)], "mul")?;
        let cg = r1.pop().expect("two products");
        let sq = r1.pop().expect("two products");
        let var = b.scale(&sq.sum_last(), inv_d)?;
        let var = b.offset(&var, LN_EPS)?;
        let var_d = var.relayout(|t| t.broadcast_last(d))?;
        // cg * p(var), expanded term by term
        let mut out = b.scale(&cg, k[0])?;
        if rounds == 3 {
            let mut r2 = b.products(
                &[(Product::Elementwise, &var, &var), (Product::Elementwise, &cg, &var_d)],
                "mul",
            )?;
            let cgv = r2.pop().expect("two products");
            let var2 = r2.pop().expect("two products");
            let var2_d = var2.relayout(|t| t.broadcast_last(d))?;
            let mut r3 = b.products(
                &[(Product::Elementwise, &cg, &var2_d), (Product::Elementwise, &cgv, &var2_d)],
                "mul",
            )?;
            let cgv3 = r3.pop().expect("two products");
            let cgv2 = r3.pop().expect("two products");
            for (t, c) in [(&cgv, k[1]), (&cgv2, k[2]), (&cgv3, k[3])] {
                let term = b.scale(t, c)?;
                out = b.add(&out, &term)?;
            }
        } else {
            let cgv = b.products(&[(Product::Elementwise, &cg, &var_d)], "mul")?.remove(0);
            let term = b.scale(&cgv, k[1])?;
            out = b.add(&out, &term)?;
        }
        let bias = bias.relayout(|t| t.broadcast_rows(n))?;
        b.add(&out, &bias)
    })
}

/// `W_L (Q K^T) V` over all heads at once; `q`, `k`, `v` are `[h, N, r/h]`.
/// Three rounds: two share-by-share matmuls and the `W_L` linear layer.
pub fn linatten<B: Backend>(b: &mut B, q: &B::T, k: &B::T, v: &B::T, w_l: &B::T) -> Result<B::T> {
    let [h, n, _] = *q.shape() else {
        return Err(Error::shape("linatten", q.shape(), &[]));
    };
    if w_l.shape() != [n, n] {
        return Err(Error::shape("linatten", w_l.shape(), &[n, n]));
    }
    b.scope("linatten", |b| {
        let kt = k.relayout(|t| t.transpose_last2())?;
        let scores = b.products(&[(Product::Matmul, q, &kt)], "matmul")?.remove(0);
        let w_l = w_l.relayout(|t| t.repeat_batch(h))?;
        let mixed = b.products(&[(Product::Matmul, &w_l, &scores)], "linear")?.remove(0);
        Ok(b.products(&[(Product::Matmul, &mixed, v)], "matmul")?.remove(0))
    })
}

/// One adapter on `[N, d_model]`:
///
/// ```text
/// u   = down(x)
/// a   = u + attn_out(LinAtten(W_Q n1, W_K n1, W_V n1)),  n1 = LN1(u)
/// z   = a + fc2(ReLU(fc1(LN2(a))))
/// out = x + scaler * up(z)
/// ```
pub fn adapter_forward<B: Backend>(
    b: &mut B,
    x: &B::T,
    p: &AdapterParams<B::T>,
    cfg: &AdapterConfig,
) -> Result<B::T> {
    b.scope("adapter", |b| {
        let u = linear(b, x, &p.down, None)?;
        let n1 = layernorm(b, &u, &p.ln1_gain, &p.ln1_bias, 3)?;
        let heads = |t: B::T| t.relayout(|r| r.split_heads(cfg.h));
        let q = heads(linear(b, &n1, &p.w_q, None)?)?;
        let k = heads(linear(b, &n1, &p.w_k, None)?)?;
        let v = heads(linear(b, &n1, &p.w_v, None)?)?;
        let att = linatten(b, &q, &k, &v, &p.w_l)?.relayout(|r| r.merge_heads())?;
        let att = linear(b, &att, &p.attn_out, None)?;
        let a = b.add(&u, &att)?;
        let n2 = layernorm(b, &a, &p.ln2_gain, &p.ln2_bias, 3)?;
        let hidden = linear(b, &n2, &p.fc1, None)?;
        let hidden = b.relu(&hidden)?;
        let m = linear(b, &hidden, &p.fc2, None)?;
        let z = b.add(&a, &m)?;
        let up = linear(b, &z, &p.up, None)?;
        let up = b.scale(&up, cfg.scaler)?;
        b.add(x, &up)
    })
}

/// All adapters, then LayerNorm and the classifier on the class token (row 0).
/// Returns `[1, n_classes]` logits.
pub fn pipeline_forward<B: Backend>(
    b: &mut B,
    x: &B::T,
    p: &PipelineParams<B::T>,
    cfg: &AdapterConfig,
) -> Result<B::T> {
    let [n, d] = cfg.input_shape();
    if x.shape() != [n, d] {
        return Err(Error::shape("pipeline input", x.shape(), &[n, d]));
    }
    let mut h = x.clone();
    for a in &p.adapters {
        h = adapter_forward(b, &h, a, cfg)?;
    }
    b.scope("head", |b| {
        let cls = h.relayout(|t| t.row(0))?;
        let normed = layernorm(b, &cls, &p.final_gain, &p.final_bias, 2)?;
        linear(b, &normed, &p.classifier, None)
    })
}

/// Exact private ReLU, 9 rounds: `ltz` (8) and one product `(1 - [x < 0]) x`.
pub fn relu_private(x: &ArithShare, s: &mut Session<'_>) -> Result<ArithShare> {
    s.scoped("relu", |s| {
        let negative = ltz(x, s)?;
        let keep = negative.neg().add_public_scalar(1);
        // keep is an integer, so the product is already at scale 2^f
        Ok(s.beaver_raw(&[(Product::Elementwise, &keep, x)], "mul")?.remove(0))
    })
}

pub fn linear_private(
    x: &ArithShare,
    w: &ArithShare,
    bias: Option<&ArithShare>,
    s: &mut Session<'_>,
) -> Result<ArithShare> {
    linear(s, x, w, bias)
}

pub fn layernorm_private(
    x: &ArithShare,
    gain: &ArithShare,
    bias: &ArithShare,
    rounds: u32,
    s: &mut Session<'_>,
) -> Result<ArithShare> {
    layernorm(s, x, gain, bias, rounds)
}

pub fn linatten_private(
    q: &ArithShare,
    k: &ArithShare,
    v: &ArithShare,
    w_l: &ArithShare,
    s: &mut Session<'_>,
) -> Result<ArithShare> {
    linatten(s, q, k, v, w_l)
}

pub fn adapter_forward_private(
    x: &ArithShare,
    p: &AdapterParams<ArithShare>,
    cfg: &AdapterConfig,
    s: &mut Session<'_>,
) -> Result<ArithShare> {
    adapter_forward(s, x, p, cfg)
}

/// The private pipeline. Runs audited: any unmasked reveal aborts it.
pub fn pipeline_forward_private(
    x: &ArithShare,
    p: &PipelineParams<ArithShare>,
    cfg: &AdapterConfig,
    s: &mut Session<'_>,
) -> Result<ArithShare> {
    let prev = s.channel().set_audit(true);
    let out = pipeline_forward(s, x, p, cfg);
    s.channel().set_audit(prev);
    out
}

pub fn adapter_forward_plain(x: &FixedTensor, p: &AdapterParams<FixedTensor>, cfg: &AdapterConfig) -> Result<FixedTensor> {
    adapter_forward(&mut FixedPlain { cfg: x.config() }, x, p, cfg)
}

pub fn pipeline_forward_plain(x: &FixedTensor, p: &PipelineParams<FixedTensor>, cfg: &AdapterConfig) -> Result<FixedTensor> {
    pipeline_forward(&mut FixedPlain { cfg: x.config() }, x, p, cfg)
}

pub fn adapter_forward_f64(x: &RealTensor, p: &AdapterParams<RealTensor>, cfg: &AdapterConfig) -> Result<RealTensor> {
    adapter_forward(&mut RealPlain, x, p, cfg)
}

pub fn pipeline_forward_f64(x: &RealTensor, p: &PipelineParams<RealTensor>, cfg: &AdapterConfig) -> Result<RealTensor> {
    pipeline_forward(&mut RealPlain, x, p, cfg)
}

/// Decodes fixed-point weights for the double-precision reference.
pub fn to_real(p: &PipelineParams<FixedTensor>) -> PipelineParams<RealTensor> {
    p.try_map(|t| Ok(RealTensor::from_fixed(t))).expect("decoding cannot fail")
}
