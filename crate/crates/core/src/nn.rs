//! Layer primitives with hand-derived backward passes.
//!
//! Activations are `[rows x features]` slices where rows enumerate
//! `(dialogue, position)` pairs; attention additionally groups rows into
//! blocks of `seq_len` consecutive positions.

use crate::numeric::linalg::{add_col_sums, add_row_bias, gemm_nn, gemm_nt, gemm_tn};
use crate::numeric::{glorot, ops, Gradients, ParamId, ParamStore, Rng, Tensor};
use crate::error::Result;

/// Affine map `y = x W^T + b` with `W` stored `[out x in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn register(
        store: &mut ParamStore,
        rng: &Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Result<Self> {
        let w = glorot(
            &mut rng.split_named(&format!("{name}.w")),
            &[fan_out, fan_in],
            fan_in,
            fan_out,
        );
        let weight = store.add(format!("{name}.w"), w)?;
        let bias = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows * self.fan_out];
        gemm_nt(
            x,
            store.value(self.weight).data(),
            rows,
            self.fan_in,
            self.fan_out,
            &mut y,
            false,
        );
        if let Some(b) = self.bias {
            add_row_bias(&mut y, store.value(b).data());
        }
        y
    }

    /// Accumulates parameter gradients and, if requested, `dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &[f64],
        dy: &[f64],
        rows: usize,
        grads: &mut Gradients,
        dx: Option<&mut [f64]>,
    ) {
        gemm_tn(dy, x, rows, self.fan_out, self.fan_in, grads.slot(self.weight), true);
        if let Some(b) = self.bias {
            add_col_sums(dy, grads.slot(b));
        }
        if let Some(dx) = dx {
            gemm_nn(
                dy,
                store.value(self.weight).data(),
                rows,
                self.fan_out,
                self.fan_in,
                dx,
                true,
            );
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LayerNormCache {
    normed: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: store.add(format!("{name}.g"), Tensor::filled(&[dim], 1.0))?,
            shift: store.add(format!("{name}.b"), Tensor::zeros(&[dim]))?,
            dim,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let d = self.dim;
        let g = store.value(self.gain).data();
        let b = store.value(self.shift).data();
        let rows = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut cache = LayerNormCache {
            normed: vec![0.0; x.len()],
            inv_std: vec![0.0; rows],
        };
        for r in 0..rows {
            let xr = &x[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            cache.inv_std[r] = inv;
            for k in 0..d {
                let n = (xr[k] - mean) * inv;
                cache.normed[r * d + k] = n;
                y[r * d + k] = g[k] * n + b[k];
            }
        }
        (y, cache)
    }

    /// Returns `dx`; accumulates gain/shift gradients.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LayerNormCache,
        dy: &[f64],
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let d = self.dim;
        let g = store.value(self.gain).data();
        let rows = dy.len() / d;
        let mut dx = vec![0.0; dy.len()];
        let mut dgain = vec![0.0; d];
        let mut dshift = vec![0.0; d];
        let mut dn = vec![0.0; d];
        for r in 0..rows {
            let n = &cache.normed[r * d..(r + 1) * d];
            let dyr = &dy[r * d..(r + 1) * d];
            for k in 0..d {
                dgain[k] += dyr[k] * n[k];
                dshift[k] += dyr[k];
                dn[k] = dyr[k] * g[k];
            }
            let mean_dn = dn.iter().sum::<f64>() / d as f64;
            let mean_dn_n = dn.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let inv = cache.inv_std[r];
            for k in 0..d {
                dx[r * d + k] = inv * (dn[k] - mean_dn - n[k] * mean_dn_n);
            }
        }
        for (o, v) in grads.slot(self.gain).iter_mut().zip(&dgain) {
            *o += v;
        }
        for (o, v) in grads.slot(self.shift).iter_mut().zip(&dshift) {
            *o += v;
        }
        dx
    }
}

/// Shape of a batched attention call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionShape {
    pub blocks: usize,
    pub seq_len: usize,
    pub width: usize,
    pub heads: usize,
}

impl AttentionShape {
    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    fn rows(&self) -> usize {
        self.blocks * self.seq_len
    }
}

/// Attention probabilities, `[blocks x heads x seq_len x seq_len]`.
#[derive(Debug, Clone, Default)]
pub struct AttentionCache {
    pub probs: Vec<f64>,
}

/// Masked scaled dot-product attention over each block of rows.
///
/// Keys at masked positions get weight zero; masked query rows output zeros.
/// Each head attends within its slice of the feature axis.
pub fn attention_forward(
    shape: AttentionShape,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    mask: &[bool],
    scale: f64,
) -> (Vec<f64>, AttentionCache) {
    let AttentionShape {
        blocks,
        seq_len: l,
        width: d,
        heads,
    } = shape;
    let dh = shape.head_dim();
    let mut out = vec![0.0; shape.rows() * d];
    let mut probs = vec![0.0; blocks * heads * l * l];
    let mut row = vec![0.0; l];
    for b in 0..blocks {
        let base = b * l;
        for h in 0..heads {
            let off = h * dh;
            for t in 0..l {
                if !mask[base + t] {
                    continue;
                }
                let qt = &q[(base + t) * d + off..(base + t) * d + off + dh];
                let mut max = f64::NEG_INFINITY;
                for s in 0..l {
                    if mask[base + s] {
                        let ks = &k[(base + s) * d + off..(base + s) * d + off + dh];
                        let score = scale * qt.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>();
                        row[s] = score;
                        max = max.max(score);
                    }
                }
                let mut sum = 0.0;
                for s in 0..l {
                    if mask[base + s] {
                        row[s] = (row[s] - max).exp();
                        sum += row[s];
                    } else {
                        row[s] = 0.0;
                    }
                }
                let p = &mut probs[((b * heads + h) * l + t) * l..((b * heads + h) * l + t + 1) * l];
                let o = &mut out[(base + t) * d + off..(base + t) * d + off + dh];
                for s in 0..l {
                    if !mask[base + s] {
                        continue;
                    }
                    let w = row[s] / sum;
                    p[s] = w;
                    let vs = &v[(base + s) * d + off..(base + s) * d + off + dh];
                    for (oi, vi) in o.iter_mut().zip(vs) {
                        *oi += w * vi;
                    }
                }
            }
        }
    }
    (out, AttentionCache { probs })
}

/// Gradients of [`attention_forward`] with respect to `q`, `k` and `v`.
pub fn attention_backward(
    shape: AttentionShape,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    cache: &AttentionCache,
    dout: &[f64],
    scale: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let AttentionShape {
        blocks,
        seq_len: l,
        width: d,
        heads,
    } = shape;
    let dh = shape.head_dim();
    let n = shape.rows() * d;
    let (mut dq, mut dk, mut dv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut dp = vec![0.0; l];
    for b in 0..blocks {
        let base = b * l;
        for h in 0..heads {
            let off = h * dh;
            for t in 0..l {
                let p = &cache.probs[((b * heads + h) * l + t) * l..((b * heads + h) * l + t + 1) * l];
                if p.iter().all(|&w| w == 0.0) {
                    continue;
                }
                let dot_row = &dout[(base + t) * d + off..(base + t) * d + off + dh];
                let mut weighted = 0.0;
                for s in 0..l {
                    if p[s] == 0.0 {
                        dp[s] = 0.0;
                        continue;
                    }
                    let vs = &v[(base + s) * d + off..(base + s) * d + off + dh];
                    dp[s] = dot_row.iter().zip(vs).map(|(a, b)| a * b).sum();
                    weighted += p[s] * dp[s];
                    let dvs = &mut dv[(base + s) * d + off..(base + s) * d + off + dh];
                    for (g, o) in dvs.iter_mut().zip(dot_row) {
                        *g += p[s] * o;
                    }
                }
                for s in 0..l {
                    if p[s] == 0.0 {
                        continue;
                    }
                    let ds = p[s] * (dp[s] - weighted) * scale;
                    for i in 0..dh {
                        dq[(base + t) * d + off + i] += ds * k[(base + s) * d + off + i];
                        dk[(base + s) * d + off + i] += ds * q[(base + t) * d + off + i];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Inverted dropout mask: entries are `0` or `1 / (1 - rate)`.
pub fn dropout_mask(rng: &mut Rng, len: usize, rate: f64) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some((0..len).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect())
}

pub fn apply_mask(x: &mut [f64], mask: Option<&Vec<f64>>) {
    if let Some(m) = mask {
        for (v, s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}

/// Elementwise GELU returning the pre-activation copy for backward.
pub fn gelu_forward(pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&x| ops::gelu(x)).collect()
}

pub fn gelu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter().zip(dy).map(|(&x, &g)| g * ops::gelu_grad(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_returns_its_value() {
        let shape = AttentionShape {
            blocks: 1,
            seq_len: 1,
            width: 4,
            heads: 2,
        };
        let q = [0.3, -1.0, 2.0, 0.5];
        let k = [1.0, 2.0, -0.5, 0.1];
        let v = [7.0, 8.0, 9.0, 10.0];
        let (out, _) = attention_forward(shape, &q, &k, &v, &[true], 0.5);
        assert_eq!(out, v.to_vec());
    }

    #[test]
    fn identical_keys_give_uniform_weights_over_valid_positions() {
        let shape = AttentionShape {
            blocks: 1,
            seq_len: 3,
            width: 2,
            heads: 1,
        };
        let q = [1.0, 2.0, -1.0, 0.5, 3.0, 3.0];
        let k = [0.4, 0.9, 0.4, 0.9, 0.4, 0.9];
        let v = [1.0, 0.0, 3.0, 2.0, 100.0, 100.0];
        let mask = [true, true, false];
        let (out, cache) = attention_forward(shape, &q, &k, &v, &mask, 1.0);
        for t in 0..2 {
            assert!((out[t * 2] - 2.0).abs() < 1e-12);
            assert!((out[t * 2 + 1] - 1.0).abs() < 1e-12);
        }
        // masked query row outputs zeros and has no weights
        assert_eq!(&out[4..6], &[0.0, 0.0]);
        assert!(cache.probs[6..9].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = Rng::new(1);
        assert!(dropout_mask(&mut rng, 10, 0.0).is_none());
        let m = dropout_mask(&mut rng, 1000, 0.5).unwrap();
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
