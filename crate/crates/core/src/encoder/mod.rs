//! Two-stage representation encoder.
//!
//! Per modality: enrichment (`h`), modality-aware self-attention (`h_ma`),
//! gated cross-modal attention (`h_ia`) and integration (`h_tilde`).

mod batch;
pub mod cross;
pub mod embed;
pub mod integrate;
pub mod self_attention;

pub use batch::DialogueBatch;
pub use cross::{gated_cross_attention, gated_cross_attention_backward, CrossAttentionCache};
pub use embed::{embed_backward, embed_forward, sinusoidal_encoding};
pub use integrate::{integrate_backward, integrate_context};
pub use self_attention::{EncoderLayer, EncoderLayerCache};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::numeric::{glorot, Gradients, ParamId, ParamStore, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
    Visual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Visual];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        }
    }

    pub fn short(self) -> char {
        match self {
            Modality::Text => 't',
            Modality::Audio => 'a',
            Modality::Visual => 'v',
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "t" | "text" => Ok(Modality::Text),
            "a" | "audio" => Ok(Modality::Audio),
            "v" | "visual" => Ok(Modality::Visual),
            _ => Err(Error::InvalidArgument(format!("unknown modality {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_in: [usize; 3],
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub n_speakers: usize,
    pub mae_on: bool,
    pub iae_on: bool,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalityBlock {
    pub conv: Linear,
    pub mae: Option<EncoderLayer>,
    /// Gate applied when this modality serves as key/value for another query.
    pub gate: Option<Linear>,
    pub fuse: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub speakers: ParamId,
    pub blocks: [ModalityBlock; 3],
}

/// All intermediate representations, each `[B x L x d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStates {
    pub h: [Tensor; 3],
    pub h_ma: [Tensor; 3],
    pub h_ia: [Tensor; 3],
    pub h_tilde: [Tensor; 3],
}

#[derive(Debug, Clone, Default)]
pub struct EncoderCache {
    mae: [Option<EncoderLayerCache>; 3],
    cross: [Option<CrossAttentionCache>; 3],
}

fn to_tensor(data: Vec<f64>, b: usize, l: usize, d: usize) -> Result<Tensor> {
    Tensor::new(vec![b, l, d], data)
}

impl Encoder {
    pub fn register(store: &mut ParamStore, rng: &Rng, config: EncoderConfig) -> Result<Self> {
        let d = config.d_model;
        if d == 0 || config.heads == 0 || !d.is_multiple_of(config.heads) {
            return Err(Error::InvalidArgument(format!(
                "model width {d} is not divisible by {} heads",
                config.heads
            )));
        }
        if config.n_speakers == 0 {
            return Err(Error::InvalidArgument("at least one speaker is required".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} must lie in [0, 1)",
                config.dropout
            )));
        }
        let table = glorot(
            &mut rng.split_named("enc.speaker"),
            &[config.n_speakers, d],
            config.n_speakers,
            d,
        );
        let speakers = store.add("enc.speaker", table)?;
        let mut blocks = Vec::with_capacity(3);
        for m in Modality::ALL {
            let p = format!("enc.{}", m.name());
            let conv = Linear::register(store, rng, &format!("{p}.conv"), config.d_in[m.index()], d, true)?;
            let mae = if config.mae_on {
                Some(EncoderLayer::register(store, rng, &format!("{p}.mae"), d, config.heads, config.d_ff)?)
            } else {
                None
            };
            let gate = if config.iae_on {
                Some(Linear::register(store, rng, &format!("{p}.gate"), d, d, true)?)
            } else {
                None
            };
            let fuse = Linear::register(store, rng, &format!("{p}.fuse"), 2 * d, d, true)?;
            blocks.push(ModalityBlock { conv, mae, gate, fuse });
        }
        Ok(Self {
            config,
            speakers,
            blocks: [blocks[0], blocks[1], blocks[2]],
        })
    }

    fn others(&self, m: usize) -> impl Iterator<Item = usize> {
        (0..3).filter(move |&o| o != m)
    }

    /// Runs all stages. Dropout is active only when `rng` is given.
    pub fn forward(
        &self,
        store: &ParamStore,
        batch: &DialogueBatch,
        mut rng: Option<&mut Rng>,
    ) -> Result<(EncodedStates, EncoderCache)> {
        let (b, l, d) = (batch.batch_size, batch.max_len, self.config.d_model);
        if batch.speakers.len() != b * l || batch.mask.len() != b * l {
            return Err(Error::Shape("batch index arrays do not match B x L".into()));
        }
        let rate = self.config.dropout;
        let mut cache = EncoderCache::default();
        let mut h = Vec::with_capacity(3);
        let mut h_ma = Vec::with_capacity(3);
        for m in Modality::ALL {
            let block = &self.blocks[m.index()];
            let x = batch.features(m);
            if x.shape() != [b, l, block.conv.fan_in] {
                return Err(Error::Shape(format!(
                    "{} features have shape {:?}, expected [{b}, {l}, {}]",
                    m.name(),
                    x.shape(),
                    block.conv.fan_in
                )));
            }
            let hm = embed_forward(store, &block.conv, self.speakers, x.data(), &batch.speakers, l)?;
            let ma = match &block.mae {
                Some(layer) => {
                    let (out, c) = layer.forward(store, &hm, &batch.mask, b, l, rate, rng.as_deref_mut());
                    cache.mae[m.index()] = Some(c);
                    out
                }
                None => hm.clone(),
            };
            h.push(hm);
            h_ma.push(ma);
        }
        let mut h_ia = Vec::with_capacity(3);
        for m in 0..3 {
            if self.config.iae_on {
                let others: Vec<(&Linear, &[f64])> = self
                    .others(m)
                    .map(|o| (self.blocks[o].gate.as_ref().expect("gate registered"), h_ma[o].as_slice()))
                    .collect();
                let (out, c) = gated_cross_attention(
                    store,
                    &h_ma[m],
                    &others,
                    &batch.mask,
                    b,
                    l,
                    rate,
                    rng.as_deref_mut(),
                )?;
                cache.cross[m] = Some(c);
                h_ia.push(out);
            } else {
                h_ia.push(h_ma[m].clone());
            }
        }
        let mut h_tilde = Vec::with_capacity(3);
        for m in 0..3 {
            h_tilde.push(integrate_context(store, &self.blocks[m].fuse, &h_ma[m], &h_ia[m])?);
        }
        let pack = |v: Vec<Vec<f64>>| -> Result<[Tensor; 3]> {
            let mut it = v.into_iter().map(|x| to_tensor(x, b, l, d));
            Ok([it.next().unwrap()?, it.next().unwrap()?, it.next().unwrap()?])
        };
        let states = EncodedStates {
            h: pack(h)?,
            h_ma: pack(h_ma)?,
            h_ia: pack(h_ia)?,
            h_tilde: pack(h_tilde)?,
        };
        for t in states.h_tilde.iter() {
            if !t.is_finite() {
                return Err(Error::NonFinite("encoder output".into()));
            }
        }
        Ok((states, cache))
    }

    /// Backpropagates `d h_tilde` per modality into encoder parameters.
    pub fn backward(
        &self,
        store: &ParamStore,
        batch: &DialogueBatch,
        states: &EncodedStates,
        cache: &EncoderCache,
        d_tilde: &[Vec<f64>; 3],
        grads: &mut Gradients,
    ) {
        let (b, l) = (batch.batch_size, batch.max_len);
        let mut d_ma: Vec<Vec<f64>> = Vec::with_capacity(3);
        let mut d_ia: Vec<Vec<f64>> = Vec::with_capacity(3);
        for m in 0..3 {
            let (da, di) = integrate_backward(
                store,
                &self.blocks[m].fuse,
                states.h_ma[m].data(),
                states.h_ia[m].data(),
                &d_tilde[m],
                grads,
            );
            d_ma.push(da);
            d_ia.push(di);
        }
        for m in 0..3 {
            match &cache.cross[m] {
                Some(c) => {
                    let idx: Vec<usize> = self.others(m).collect();
                    let others: Vec<(&Linear, &[f64])> = idx
                        .iter()
                        .map(|&o| (self.blocks[o].gate.as_ref().expect("gate registered"), states.h_ma[o].data()))
                        .collect();
                    let (dq, d_others) = gated_cross_attention_backward(
                        store,
                        states.h_ma[m].data(),
                        &others,
                        c,
                        &d_ia[m],
                        b,
                        l,
                        grads,
                    );
                    add_into(&mut d_ma[m], &dq);
                    for (o, dsrc) in idx.into_iter().zip(d_others) {
                        add_into(&mut d_ma[o], &dsrc);
                    }
                }
                None => {
                    let di = std::mem::take(&mut d_ia[m]);
                    add_into(&mut d_ma[m], &di);
                }
            }
        }
        for m in Modality::ALL {
            let i = m.index();
            let block = &self.blocks[i];
            let dh = match (&block.mae, &cache.mae[i]) {
                (Some(layer), Some(c)) => layer.backward(store, c, &d_ma[i], b, l, grads),
                _ => std::mem::take(&mut d_ma[i]),
            };
            embed_backward(
                store,
                &block.conv,
                self.speakers,
                batch.features(m).data(),
                &batch.speakers,
                &dh,
                grads,
            );
        }
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
