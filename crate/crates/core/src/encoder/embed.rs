//! Input enrichment: pointwise projection, speaker embedding and sinusoidal positions.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::numeric::{Gradients, ParamId, ParamStore};

/// Standard sine/cosine table, `[len x d]`: even channels `sin`, odd `cos`.
pub fn sinusoidal_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let freq = 1.0 / 10000f64.powf(2.0 * pair / d as f64);
            let angle = t as f64 * freq;
            pe[t * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// `h = x W^T + b + speaker[s] + PE[t]` for every row of one modality.
pub fn embed_forward(
    store: &ParamStore,
    conv: &Linear,
    speaker_table: ParamId,
    x: &[f64],
    speakers: &[usize],
    seq_len: usize,
) -> Result<Vec<f64>> {
    let rows = speakers.len();
    if x.len() != rows * conv.fan_in {
        return Err(Error::Shape(format!(
            "input features have {} values, expected {rows} x {}",
            x.len(),
            conv.fan_in
        )));
    }
    let d = conv.fan_out;
    let table = store.value(speaker_table);
    let n_speakers = table.rows();
    let pe = sinusoidal_encoding(seq_len, d);
    let mut h = conv.forward(store, x, rows);
    for r in 0..rows {
        let s = speakers[r];
        if s >= n_speakers {
            return Err(Error::InvalidArgument(format!(
                "speaker id {s} out of range for {n_speakers} speakers"
            )));
        }
        let t = r % seq_len;
        let emb = table.row(s);
        for k in 0..d {
            h[r * d + k] += emb[k] + pe[t * d + k];
        }
    }
    Ok(h)
}

pub fn embed_backward(
    store: &ParamStore,
    conv: &Linear,
    speaker_table: ParamId,
    x: &[f64],
    speakers: &[usize],
    dh: &[f64],
    grads: &mut Gradients,
) {
    let rows = speakers.len();
    let d = conv.fan_out;
    conv.backward(store, x, dh, rows, grads, None);
    let table = grads.slot(speaker_table);
    for (r, &s) in speakers.iter().enumerate() {
        for k in 0..d {
            table[s * d + k] += dh[r * d + k];
        }
    }
}
