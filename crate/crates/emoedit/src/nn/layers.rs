//! Network building blocks composed from tape primitives: linear and 1-D
//! convolution layers, layer norm with learned affine, multi-head
//! attention, a pre-norm transformer block, an LSTM, dropout, and fixed
//! sinusoidal position codes.
//!
//! Every function takes a name prefix; parameter names are derived from it
//! so the same code path serves initialization, training, and checkpoint
//! loading.

use super::{Graph, Init, Var};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `x (T,d_in) -> x W + b` with W Glorot and b zero.
pub fn linear(g: &mut Graph, name: &str, x: Var, d_in: usize, d_out: usize) -> Var {
    let w = g.param(&format!("{name}.w"), (d_in, d_out), Init::Glorot);
    let b = g.param(&format!("{name}.b"), (1, d_out), Init::Zeros);
    let y = g.tape.matmul(x, w);
    g.tape.add_row(y, b)
}

/// 1-D convolution over time with zero padding and stride 1, realized as
/// unfold + matmul. Weight shape (kernel*c_in, c_out).
pub fn conv1d(g: &mut Graph, name: &str, x: Var, c_in: usize, c_out: usize, kernel: usize) -> Var {
    let w = g.param(&format!("{name}.w"), (kernel * c_in, c_out), Init::Glorot);
    let b = g.param(&format!("{name}.b"), (1, c_out), Init::Zeros);
    let u = g.tape.unfold(x, kernel);
    let y = g.tape.matmul(u, w);
    g.tape.add_row(y, b)
}

/// Row-wise layer norm with learned gain and bias.
pub fn layer_norm(g: &mut Graph, name: &str, x: Var, dim: usize) -> Var {
    let gain = g.param(&format!("{name}.g"), (1, dim), Init::Ones);
    let bias = g.param(&format!("{name}.b"), (1, dim), Init::Zeros);
    let n = g.tape.layer_norm_rows(x);
    let scaled = g.tape.mul_row(n, gain);
    g.tape.add_row(scaled, bias)
}

/// Multi-head scaled dot-product attention. Queries come from `q_in`
/// (Tq,dim), keys and values from `kv_in` (Tk,dim); key positions at and
/// beyond `valid_keys` receive zero attention weight.
pub fn attention(
    g: &mut Graph,
    name: &str,
    q_in: Var,
    kv_in: Var,
    dim: usize,
    heads: usize,
    valid_keys: usize,
) -> Var {
    assert!(dim % heads == 0, "dim {dim} not divisible by heads {heads}");
    let dh = dim / heads;
    let q = linear(g, &format!("{name}.q"), q_in, dim, dim);
    let k = linear(g, &format!("{name}.k"), kv_in, dim, dim);
    let v = linear(g, &format!("{name}.v"), kv_in, dim, dim);
    let mut mixed = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.tape.slice_cols(q, lo, hi);
        let kh = g.tape.slice_cols(k, lo, hi);
        let vh = g.tape.slice_cols(v, lo, hi);
        let scores = g.tape.matmul_bt(qh, kh);
        let scaled = g.tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let weights = g.tape.softmax_rows(scaled, valid_keys);
        mixed.push(g.tape.matmul(weights, vh));
    }
    let cat = g.tape.concat_cols(&mixed);
    linear(g, &format!("{name}.o"), cat, dim, dim)
}

/// Position-wise feed-forward: linear, relu, linear.
pub fn feed_forward(g: &mut Graph, name: &str, x: Var, dim: usize, inner: usize) -> Var {
    let h = linear(g, &format!("{name}.1"), x, dim, inner);
    let h = g.tape.relu(h);
    linear(g, &format!("{name}.2"), h, inner, dim)
}

/// Inverted dropout: identity in eval mode, mask-and-rescale in training.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, train: bool, rng: &mut ChaCha8Rng) -> Var {
    if !train || rate <= 0.0 {
        return x;
    }
    assert!(rate < 1.0, "dropout rate {rate} leaves nothing");
    let keep = 1.0 - rate;
    let dim = g.tape.value(x).dim();
    let mask = Array2::from_shape_fn(dim, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    g.tape.mul_const(x, mask)
}

/// Pre-norm transformer block: self-attention, optional cross-attention to
/// `memory` (a sequence plus its valid length), then a feed-forward, each
/// wrapped in layer norm and a residual connection. `valid_rows` masks
/// padded self-attention keys; padded query rows may hold garbage and the
/// caller discards them.
#[allow(clippy::too_many_arguments)]
pub fn transformer_block(
    g: &mut Graph,
    name: &str,
    x: Var,
    memory: Option<(Var, usize)>,
    dim: usize,
    heads: usize,
    valid_rows: usize,
    rate: f64,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Var {
    let n1 = layer_norm(g, &format!("{name}.ln1"), x, dim);
    let sa = attention(g, &format!("{name}.self"), n1, n1, dim, heads, valid_rows);
    let sa = dropout(g, sa, rate, train, rng);
    let mut h = g.tape.add(x, sa);
    if let Some((mem, mem_valid)) = memory {
        let n2 = layer_norm(g, &format!("{name}.ln2"), h, dim);
        let ca = attention(g, &format!("{name}.cross"), n2, mem, dim, heads, mem_valid);
        let ca = dropout(g, ca, rate, train, rng);
        h = g.tape.add(h, ca);
    }
    let n3 = layer_norm(g, &format!("{name}.ln3"), h, dim);
    let ff = feed_forward(g, &format!("{name}.ff"), n3, dim, 4 * dim);
    let ff = dropout(g, ff, rate, train, rng);
    g.tape.add(h, ff)
}

/// Unidirectional LSTM returning all hidden states as a (T,d_h) matrix.
/// The input projection runs as one matmul for the whole sequence; the
/// recurrence slices one row per step.
pub fn lstm(g: &mut Graph, name: &str, x: Var, d_in: usize, d_h: usize) -> Var {
    let t_len = g.tape.value(x).nrows();
    let wx = g.param(&format!("{name}.wx"), (d_in, 4 * d_h), Init::Glorot);
    let wh = g.param(&format!("{name}.wh"), (d_h, 4 * d_h), Init::Glorot);
    let b = g.param(&format!("{name}.b"), (1, 4 * d_h), Init::Zeros);
    let xw = g.tape.matmul(x, wx);
    let xw = g.tape.add_row(xw, b);
    let mut h = g.tape.leaf(Array2::zeros((1, d_h)));
    let mut c = g.tape.leaf(Array2::zeros((1, d_h)));
    let mut states = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let xt = g.tape.slice_rows(xw, t, t + 1);
        let hw = g.tape.matmul(h, wh);
        let gates = g.tape.add(xt, hw);
        let i_gate = g.tape.slice_cols(gates, 0, d_h);
        let i_gate = g.tape.sigmoid(i_gate);
        let f_gate = g.tape.slice_cols(gates, d_h, 2 * d_h);
        let f_gate = g.tape.sigmoid(f_gate);
        let g_gate = g.tape.slice_cols(gates, 2 * d_h, 3 * d_h);
        let g_gate = g.tape.tanh(g_gate);
        let o_gate = g.tape.slice_cols(gates, 3 * d_h, 4 * d_h);
        let o_gate = g.tape.sigmoid(o_gate);
        let fc = g.tape.mul(f_gate, c);
        let ig = g.tape.mul(i_gate, g_gate);
        c = g.tape.add(fc, ig);
        let ct = g.tape.tanh(c);
        h = g.tape.mul(o_gate, ct);
        states.push(h);
    }
    g.tape.concat_rows_many(&states)
}

/// Zero out rows at and beyond `valid`, so zero padding survives layers
/// whose receptive field crosses row boundaries (convolutions).
pub fn zero_rows_beyond(g: &mut Graph, x: Var, valid: usize) -> Var {
    let (rows, cols) = g.tape.value(x).dim();
    if valid >= rows {
        return x;
    }
    let mask = Array2::from_shape_fn((rows, cols), |(r, _)| if r < valid { 1.0 } else { 0.0 });
    g.tape.mul_const(x, mask)
}

/// Fixed sinusoidal position codes, one row per position.
pub fn positional_encoding(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(pos, d)| {
        let pair = (d / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / dim as f64);
        if d % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
