//! Building blocks of the ranker, each a function of bound parameters.
//!
//! Parameters are looked up by `prefix.name`, so the same code serves
//! training, inference and the finite-difference checks.

use super::ModelError;
use crate::tensor::{Array, Bound, Tape, TensorError, Var};

/// Floor on the bottleneck standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

fn p(b: &Bound, prefix: &str, name: &str) -> Result<Var, TensorError> {
    b.get(&format!("{prefix}.{name}"))
}

/// `x W + bias`, bias broadcast over rows.
pub fn linear(tape: &mut Tape, b: &Bound, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let y = tape.matmul(x, p(b, prefix, "w")?)?;
    let bias = p(b, prefix, "b")?;
    let rows = tape.value(y).rows();
    let bias = tape.expand_rows(bias, rows)?;
    tape.add(y, bias)
}

/// Layer norm with learned gain and shift.
pub fn layer_norm(tape: &mut Tape, b: &Bound, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let rows = tape.value(x).rows();
    let n = tape.layer_norm(x)?;
    let g = tape.expand_rows(p(b, prefix, "g")?, rows)?;
    let s = tape.expand_rows(p(b, prefix, "b")?, rows)?;
    let y = tape.mul(n, g)?;
    tape.add(y, s)
}

/// Two-layer GELU network, `prefix.w1/b1/w2/b2`.
pub fn feed_forward(tape: &mut Tape, b: &Bound, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let h = tape.matmul(x, p(b, prefix, "w1")?)?;
    let rows = tape.value(h).rows();
    let b1 = tape.expand_rows(p(b, prefix, "b1")?, rows)?;
    let h = tape.add(h, b1)?;
    let h = tape.gelu(h)?;
    let y = tape.matmul(h, p(b, prefix, "w2")?)?;
    let b2 = tape.expand_rows(p(b, prefix, "b2")?, rows)?;
    tape.add(y, b2)
}

/// Multi-head scaled dot-product attention without masking.
///
/// Returns the output and one `queries x keys` weight matrix per head.
pub fn attention(
    tape: &mut Tape,
    b: &Bound,
    prefix: &str,
    queries: Var,
    keys: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>), TensorError> {
    let q = tape.matmul(queries, p(b, prefix, "wq")?)?;
    let k = tape.matmul(keys, p(b, prefix, "wk")?)?;
    let v = tape.matmul(keys, p(b, prefix, "wv")?)?;
    let d = tape.value(q).cols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale)?;
        let a = tape.softmax(logits)?;
        outs.push(tape.matmul(a, vh)?);
        weights.push(a);
    }
    let cat = if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    let out = tape.matmul(cat, p(b, prefix, "wo")?)?;
    Ok((out, weights))
}

/// Pre-norm encoder block: `H + MHA(LN H)`, then `+ FF(LN .)`.
pub fn text_layer(
    tape: &mut Tape,
    b: &Bound,
    prefix: &str,
    h: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>), TensorError> {
    let n = layer_norm(tape, b, &format!("{prefix}.ln1"), h)?;
    let (a, weights) = attention(tape, b, &format!("{prefix}.attn"), n, n, heads)?;
    let h = tape.add(h, a)?;
    let n = layer_norm(tape, b, &format!("{prefix}.ln2"), h)?;
    let f = feed_forward(tape, b, &format!("{prefix}.ff"), n)?;
    Ok((tape.add(h, f)?, weights))
}

/// Message-passing edges with relation ids; self-loops already included.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GraphEdges {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub relation: Vec<usize>,
}

impl GraphEdges {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Relation-aware graph attention for an `n x d` node matrix.
///
/// Node `i` attends over its in-edges `j -> i` with logits
/// `(W_q u_i) . (W_k u_j + e_r) / sqrt(d)`; messages are `W_v u_j + e_r`.
/// Residual `W_o` update, then a residual GELU feed-forward.
/// Returns the new nodes and the per-edge weights (`edges x 1`).
pub fn gnn_layer(
    tape: &mut Tape,
    b: &Bound,
    prefix: &str,
    u: Var,
    edges: &GraphEdges,
) -> Result<(Var, Var), TensorError> {
    let n = tape.value(u).rows();
    let d = tape.value(u).cols();
    let q = tape.matmul(u, p(b, prefix, "wq")?)?;
    let k = tape.matmul(u, p(b, prefix, "wk")?)?;
    let v = tape.matmul(u, p(b, prefix, "wv")?)?;
    let rel = tape.gather_rows(p(b, prefix, "rel")?, &edges.relation)?;
    let q_dst = tape.gather_rows(q, &edges.target)?;
    let k_src = tape.gather_rows(k, &edges.source)?;
    let k_src = tape.add(k_src, rel)?;
    let logits = tape.mul(q_dst, k_src)?;
    let logits = tape.sum_cols(logits)?;
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt())?;
    let a = tape.segment_softmax(logits, &edges.target, n)?;
    let v_src = tape.gather_rows(v, &edges.source)?;
    let msg = tape.add(v_src, rel)?;
    let a_wide = tape.expand_cols(a, d)?;
    let weighted = tape.mul(a_wide, msg)?;
    let agg = tape.scatter_add_rows(weighted, &edges.target, n)?;
    let upd = tape.matmul(agg, p(b, prefix, "wo")?)?;
    let u = tape.add(u, upd)?;
    let f = feed_forward(tape, b, &format!("{prefix}.ff"), u)?;
    Ok((tape.add(u, f)?, a))
}

/// `1/2 sum(mu^2 + sigma^2 - 1 - ln sigma^2)` on the tape.
pub fn kl_gaussian_std_normal(tape: &mut Tape, mu: Var, sigma: Var) -> Result<Var, TensorError> {
    let n = tape.value(mu).len();
    let mu2 = tape.mul(mu, mu)?;
    let s2 = tape.mul(sigma, sigma)?;
    let log_s2 = tape.log(s2)?;
    let t = tape.add(mu2, s2)?;
    let t = tape.sub(t, log_s2)?;
    let t = tape.sum(t)?;
    let t = tape.add_scalar(t, -(n as f64))?;
    tape.scale(t, 0.5)
}

/// Closed-form KL of `N(mu, diag sigma^2)` from `N(0, I)`.
pub fn kl_closed_form(mu: &[f64], sigma: &[f64]) -> Result<f64, ModelError> {
    if mu.len() != sigma.len() {
        return Err(TensorError::ShapeMismatch {
            op: "kl",
            lhs: vec![mu.len()],
            rhs: vec![sigma.len()],
        }
        .into());
    }
    if sigma.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
        return Err(TensorError::Domain {
            op: "kl",
            reason: "sigma must be positive",
        }
        .into());
    }
    Ok(0.5
        * mu.iter()
            .zip(sigma)
            .map(|(m, s)| m * m + s * s - 1.0 - (s * s).ln())
            .sum::<f64>())
}

/// Output of one bottleneck exchange.
#[derive(Debug, Clone, Copy)]
pub struct Fused {
    pub h: Var,
    pub u: Var,
    pub kl: Var,
    pub mu: Var,
    pub sigma: Var,
    pub z: Var,
}

/// Gaussian bottleneck between the interaction token and node.
///
/// `x = [h ; u]`, `(mu, s) = f(x)`, `sigma = softplus(s) + floor`,
/// `z = mu + sigma * eps`. Halves of `z` are projected back as residuals.
pub fn fuse_interaction(
    tape: &mut Tape,
    b: &Bound,
    prefix: &str,
    h_int: Var,
    u_int: Var,
    eps: &Array,
) -> Result<Fused, TensorError> {
    let x = tape.concat_cols(&[h_int, u_int])?;
    let hid = linear(tape, b, &format!("{prefix}.f1"), x)?;
    let hid = tape.gelu(hid)?;
    let out = linear(tape, b, &format!("{prefix}.f2"), hid)?;
    let dz = tape.value(out).cols() / 2;
    let mu = tape.slice_cols(out, 0, dz)?;
    let s = tape.slice_cols(out, dz, dz)?;
    let sigma = tape.softplus(s)?;
    let sigma = tape.add_scalar(sigma, SIGMA_FLOOR)?;
    let z = tape.noise(mu, sigma, eps)?;
    let kl = kl_gaussian_std_normal(tape, mu, sigma)?;
    let half = dz / 2;
    let zh = tape.slice_cols(z, 0, half)?;
    let zu = tape.slice_cols(z, half, half)?;
    let dh = tape.matmul(zh, p(b, prefix, "wh")?)?;
    let du = tape.matmul(zu, p(b, prefix, "wu")?)?;
    Ok(Fused {
        h: tape.add(h_int, dh)?,
        u: tape.add(u_int, du)?,
        kl,
        mu,
        sigma,
        z,
    })
}

/// Replace row 0 of `x` with `row`.
pub fn replace_first_row(tape: &mut Tape, x: Var, row: Var) -> Result<Var, TensorError> {
    let n = tape.value(x).rows();
    if n == 1 {
        return Ok(row);
    }
    let rest = tape.slice_rows(x, 1, n - 1)?;
    tape.concat_rows(&[row, rest])
}

/// One decoder step from `<start>` over the encoder output.
///
/// Returns the `1 x 2` logits for `(<true>, <false>)` and the cross-attention
/// weights per head.
pub fn decode(
    tape: &mut Tape,
    b: &Bound,
    start: Var,
    memory: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>), TensorError> {
    let x = start;
    let n = layer_norm(tape, b, "dec.ln1", x)?;
    // length-1 self-attention: weight 1 on itself
    let (a, _) = attention(tape, b, "dec.self", n, n, heads)?;
    let x = tape.add(x, a)?;
    let n = layer_norm(tape, b, "dec.ln2", x)?;
    let (c, cross) = attention(tape, b, "dec.cross", n, memory, heads)?;
    let x = tape.add(x, c)?;
    let n = layer_norm(tape, b, "dec.ln3", x)?;
    let f = feed_forward(tape, b, "dec.ff", n)?;
    let x = tape.add(x, f)?;
    let x = layer_norm(tape, b, "dec.ln_out", x)?;
    Ok((linear(tape, b, "dec.out", x)?, cross))
}
