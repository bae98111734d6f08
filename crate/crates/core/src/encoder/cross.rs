//! Interaction-aware encoding: gated cross-modal attention.
//!
//! For a query sequence `q` and the other modalities' sequences `h_o`:
//! `g_o = sigmoid(W_o q + b_o)`, `k = v = sum_o g_o * h_o`, and the output is
//! single-head attention of `q` over `k` scaled by `1/sqrt(d)`.

use crate::error::{Error, Result};
use crate::nn::{
    apply_mask, attention_backward, attention_forward, dropout_mask, AttentionCache,
    AttentionShape, Linear,
};
use crate::numeric::{ops::sigmoid, Gradients, ParamStore, Rng};

#[derive(Debug, Clone, Default)]
pub struct CrossAttentionCache {
    pub gates: Vec<Vec<f64>>,
    pub keys: Vec<f64>,
    attn: AttentionCache,
    drop: Option<Vec<f64>>,
}

fn shape(blocks: usize, seq_len: usize, width: usize) -> AttentionShape {
    AttentionShape {
        blocks,
        seq_len,
        width,
        heads: 1,
    }
}

/// `others` pairs each non-query modality's gate with its sequence.
pub fn gated_cross_attention(
    store: &ParamStore,
    query: &[f64],
    others: &[(&Linear, &[f64])],
    mask: &[bool],
    blocks: usize,
    seq_len: usize,
    dropout: f64,
    rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, CrossAttentionCache)> {
    if others.is_empty() {
        return Err(Error::InvalidArgument(
            "cross-modal attention needs at least two modalities".into(),
        ));
    }
    let rows = blocks * seq_len;
    let width = query.len() / rows;
    let mut keys = vec![0.0; rows * width];
    let mut gates = Vec::with_capacity(others.len());
    for (gate, seq) in others {
        if seq.len() != query.len() || gate.fan_in != width || gate.fan_out != width {
            return Err(Error::Shape("cross-attention inputs must share width".into()));
        }
        let mut g = gate.forward(store, query, rows);
        g.iter_mut().for_each(|v| *v = sigmoid(*v));
        for ((k, gi), hi) in keys.iter_mut().zip(&g).zip(seq.iter()) {
            *k += gi * hi;
        }
        gates.push(g);
    }
    let scale = 1.0 / (width as f64).sqrt();
    let (mut out, attn) =
        attention_forward(shape(blocks, seq_len, width), query, &keys, &keys, mask, scale);
    let drop = rng.and_then(|r| dropout_mask(r, out.len(), dropout));
    apply_mask(&mut out, drop.as_ref());
    Ok((
        out,
        CrossAttentionCache {
            gates,
            keys,
            attn,
            drop,
        },
    ))
}

/// Returns `(d_query, d_others)`; accumulates gate parameter gradients.
pub fn gated_cross_attention_backward(
    store: &ParamStore,
    query: &[f64],
    others: &[(&Linear, &[f64])],
    cache: &CrossAttentionCache,
    dout: &[f64],
    blocks: usize,
    seq_len: usize,
    grads: &mut Gradients,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let rows = blocks * seq_len;
    let width = query.len() / rows;
    let scale = 1.0 / (width as f64).sqrt();
    let mut dout = dout.to_vec();
    apply_mask(&mut dout, cache.drop.as_ref());
    let (mut dq, mut dk, dv) = attention_backward(
        shape(blocks, seq_len, width),
        query,
        &cache.keys,
        &cache.keys,
        &cache.attn,
        &dout,
        scale,
    );
    for (a, b) in dk.iter_mut().zip(&dv) {
        *a += b;
    }
    let mut d_others = Vec::with_capacity(others.len());
    for ((gate, seq), g) in others.iter().zip(&cache.gates) {
        let mut dseq = vec![0.0; seq.len()];
        let mut dpre = vec![0.0; seq.len()];
        for i in 0..seq.len() {
            dseq[i] = dk[i] * g[i];
            dpre[i] = dk[i] * seq[i] * g[i] * (1.0 - g[i]);
        }
        gate.backward(store, query, &dpre, rows, grads, Some(&mut dq));
        d_others.push(dseq);
    }
    (dq, d_others)
}
