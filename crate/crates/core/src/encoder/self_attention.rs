//! Modality-aware encoding: one post-norm Transformer encoder layer per modality.

use crate::error::{Error, Result};
use crate::nn::{
    apply_mask, attention_backward, attention_forward, dropout_mask, gelu_backward, gelu_forward,
    AttentionCache, AttentionShape, LayerNorm, LayerNormCache, Linear,
};
use crate::numeric::{Gradients, ParamStore, Rng};

/// `LN2(y + FF(y))` with `y = LN1(x + MHA(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
    pub heads: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EncoderLayerCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: AttentionCache,
    mixed: Vec<f64>,
    drop_attn: Option<Vec<f64>>,
    norm1: LayerNormCache,
    hidden: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
    drop_ff: Option<Vec<f64>>,
    norm2: LayerNormCache,
}

impl EncoderLayer {
    pub fn register(
        store: &mut ParamStore,
        rng: &Rng,
        name: &str,
        width: usize,
        heads: usize,
        ff_width: usize,
    ) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(Error::InvalidArgument(format!(
                "model width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::register(store, rng, &format!("{name}.wq"), width, width, true)?,
            key: Linear::register(store, rng, &format!("{name}.wk"), width, width, true)?,
            value: Linear::register(store, rng, &format!("{name}.wv"), width, width, true)?,
            output: Linear::register(store, rng, &format!("{name}.wo"), width, width, true)?,
            norm1: LayerNorm::register(store, &format!("{name}.ln1"), width)?,
            ff_in: Linear::register(store, rng, &format!("{name}.ff1"), width, ff_width, true)?,
            ff_out: Linear::register(store, rng, &format!("{name}.ff2"), ff_width, width, true)?,
            norm2: LayerNorm::register(store, &format!("{name}.ln2"), width)?,
            heads,
            width,
        })
    }

    fn shape(&self, blocks: usize, seq_len: usize) -> AttentionShape {
        AttentionShape {
            blocks,
            seq_len,
            width: self.width,
            heads: self.heads,
        }
    }

    fn scale(&self) -> f64 {
        1.0 / ((self.width / self.heads) as f64).sqrt()
    }

    /// The attention sub-block alone: `Wo * MHA(Wq x, Wk x, Wv x) + bo`.
    pub fn self_attention(
        &self,
        store: &ParamStore,
        x: &[f64],
        mask: &[bool],
        blocks: usize,
        seq_len: usize,
    ) -> Vec<f64> {
        let rows = blocks * seq_len;
        let q = self.query.forward(store, x, rows);
        let k = self.key.forward(store, x, rows);
        let v = self.value.forward(store, x, rows);
        let (mixed, _) = attention_forward(self.shape(blocks, seq_len), &q, &k, &v, mask, self.scale());
        self.output.forward(store, &mixed, rows)
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &[f64],
        mask: &[bool],
        blocks: usize,
        seq_len: usize,
        dropout: f64,
        rng: Option<&mut Rng>,
    ) -> (Vec<f64>, EncoderLayerCache) {
        let rows = blocks * seq_len;
        let (drop_attn, drop_ff) = match rng {
            Some(rng) => (
                dropout_mask(rng, rows * self.width, dropout),
                dropout_mask(rng, rows * self.width, dropout),
            ),
            None => (None, None),
        };
        let q = self.query.forward(store, x, rows);
        let k = self.key.forward(store, x, rows);
        let v = self.value.forward(store, x, rows);
        let (mixed, attn) =
            attention_forward(self.shape(blocks, seq_len), &q, &k, &v, mask, self.scale());
        let mut a = self.output.forward(store, &mixed, rows);
        apply_mask(&mut a, drop_attn.as_ref());
        for (ai, xi) in a.iter_mut().zip(x) {
            *ai += xi;
        }
        let (hidden, norm1) = self.norm1.forward(store, &a);
        let ff_pre = self.ff_in.forward(store, &hidden, rows);
        let ff_act = gelu_forward(&ff_pre);
        let mut f = self.ff_out.forward(store, &ff_act, rows);
        apply_mask(&mut f, drop_ff.as_ref());
        for (fi, hi) in f.iter_mut().zip(&hidden) {
            *fi += hi;
        }
        let (out, norm2) = self.norm2.forward(store, &f);
        let cache = EncoderLayerCache {
            input: x.to_vec(),
            q,
            k,
            v,
            attn,
            mixed,
            drop_attn,
            norm1,
            hidden,
            ff_pre,
            ff_act,
            drop_ff,
            norm2,
        };
        (out, cache)
    }

    /// Returns `dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &EncoderLayerCache,
        dout: &[f64],
        blocks: usize,
        seq_len: usize,
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let rows = blocks * seq_len;
        // second residual block
        let ds2 = self.norm2.backward(store, &cache.norm2, dout, grads);
        let mut df = ds2.clone();
        apply_mask(&mut df, cache.drop_ff.as_ref());
        let mut dact = vec![0.0; rows * self.ff_in.fan_out];
        self.ff_out.backward(store, &cache.ff_act, &df, rows, grads, Some(&mut dact));
        let dpre = gelu_backward(&cache.ff_pre, &dact);
        let mut dhidden = ds2;
        self.ff_in.backward(store, &cache.hidden, &dpre, rows, grads, Some(&mut dhidden));
        // first residual block
        let ds1 = self.norm1.backward(store, &cache.norm1, &dhidden, grads);
        let mut da = ds1.clone();
        apply_mask(&mut da, cache.drop_attn.as_ref());
        let mut dmixed = vec![0.0; rows * self.width];
        self.output.backward(store, &cache.mixed, &da, rows, grads, Some(&mut dmixed));
        let (dq, dk, dv) = attention_backward(
            self.shape(blocks, seq_len),
            &cache.q,
            &cache.k,
            &cache.v,
            &cache.attn,
            &dmixed,
            self.scale(),
        );
        let mut dx = ds1;
        self.query.backward(store, &cache.input, &dq, rows, grads, Some(&mut dx));
        self.key.backward(store, &cache.input, &dk, rows, grads, Some(&mut dx));
        self.value.backward(store, &cache.input, &dv, rows, grads, Some(&mut dx));
        dx
    }
}
