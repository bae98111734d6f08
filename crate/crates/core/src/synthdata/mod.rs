//! Synthetic dialogues with a planted multiplicative cross-modal rule.
//!
//! Each utterance draws signs `s_t, s_a, s_v` in {-1, +1}. Its parity class
//! `k = 2 [s_a != s_v] + [s_t != s_a]` flips with any single sign but not with a
//! global flip, so every class pairs a sign pattern with its negation and no
//! additive function of the features can tell classes apart. For `c != 4` a
//! visible shift `v` (one-hot in the visual stream) gives
//! `label = (k + v) mod c`. With probability `rho` an utterance instead copies
//! the label of its speaker's previous utterance and raises a flag in the text
//! stream.
//!
//! Dialogues come in antithetic twins: dialogue `2i + 1` repeats dialogue `2i`
//! with every sign and every noise term negated, except the noise on the copy
//! flag and shift channels. Labels are unchanged, so the sample is exactly
//! symmetric under that reflection and a linear model fitted to it has no
//! sign-dependent component to find.
//!
//! Feature layout (amplitude [`SIGNAL`], then Gaussian noise `sigma` on every
//! entry of valid rows): text `[s_t, copy_flag, noise...]`, audio
//! `[s_a, noise...]`, visual `[s_v, onehot(v)..., noise...]`.

mod io;
mod oracle;

pub use io::{read_dataset, write_dataset, DATASET_VERSION};
pub use oracle::{LinearProbe, OracleDecoder};

use serde::{Deserialize, Serialize};

use crate::encoder::{DialogueBatch, Modality};
use crate::error::{Error, Result};
use crate::numeric::{Rng, Tensor};

/// Amplitude of every planted feature.
pub const SIGNAL: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_dialogues: usize,
    pub max_len: usize,
    pub n_speakers: usize,
    pub d_in: [usize; 3],
    pub n_classes: usize,
    pub noise: f64,
    pub context_copy_prob: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.max_len == 0 || self.n_speakers == 0 {
            return bad("max_len and n_speakers must be positive".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be a finite non-negative number, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.context_copy_prob) {
            return bad(format!("context_copy_prob {} outside [0, 1]", self.context_copy_prob));
        }
        let [dt, da, dv] = self.d_in;
        let shifts = self.shift_count();
        let need_v = if shifts > 1 { 1 + shifts } else { 1 };
        if dt < 2 || da < 1 || dv < need_v {
            return bad(format!(
                "input widths {:?} too small: text needs 2, audio 1, visual {need_v}",
                self.d_in
            ));
        }
        Ok(())
    }

    /// Number of distinct label shifts `v`.
    pub fn shift_count(&self) -> usize {
        let c = self.n_classes;
        if c == 4 {
            1
        } else if c.is_multiple_of(4) {
            c / 4
        } else {
            c
        }
    }

    /// Label shift encoded by shift index `i`.
    pub fn shift_value(&self, i: usize) -> usize {
        if self.n_classes.is_multiple_of(4) {
            4 * i
        } else {
            i
        }
    }
}

/// Parity class of a sign triple.
pub fn parity_class(s_t: f64, s_a: f64, s_v: f64) -> usize {
    2 * usize::from(s_a != s_v) + usize::from(s_t != s_a)
}

/// One dialogue, valid utterances only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub speakers: Vec<usize>,
    pub labels: Vec<i64>,
    pub text: Vec<Vec<f64>>,
    pub audio: Vec<Vec<f64>>,
    pub visual: Vec<Vec<f64>>,
}

impl Dialogue {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, m: Modality) -> &[Vec<f64>] {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
        }
    }

    fn validate(&self, config: &GenConfig) -> std::result::Result<(), String> {
        let n = self.labels.len();
        if n == 0 || n > config.max_len {
            return Err(format!("dialogue length {n} outside 1..={}", config.max_len));
        }
        if self.speakers.len() != n {
            return Err("speakers and labels differ in length".into());
        }
        for m in Modality::ALL {
            let rows = self.features(m);
            if rows.len() != n || rows.iter().any(|r| r.len() != config.d_in[m.index()]) {
                return Err(format!("{} features do not match [{n} x {}]", m.name(), config.d_in[m.index()]));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("{} features contain non-finite values", m.name()));
            }
        }
        if let Some(&s) = self.speakers.iter().find(|&&s| s >= config.n_speakers) {
            return Err(format!("speaker {s} out of range"));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y < 0 || y as usize >= config.n_classes) {
            return Err(format!("label {y} out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: GenConfig,
    pub dialogues: Vec<Dialogue>,
}

impl Dataset {
    pub fn utterances(&self) -> usize {
        self.dialogues.iter().map(Dialogue::len).sum()
    }

    /// Splits off roughly the last `fraction` of dialogues, never separating twins.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!("split fraction {fraction} outside [0, 1)")));
        }
        let n = self.dialogues.len();
        let mut held = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
        if (n - held) % 2 == 1 && held > 0 {
            if held + 1 < n {
                held += 1;
            } else {
                held -= 1;
            }
        }
        let cut = n - held;
        let part = |d: &[Dialogue]| Dataset {
            config: self.config.clone(),
            dialogues: d.to_vec(),
        };
        Ok((part(&self.dialogues[..cut]), part(&self.dialogues[cut..])))
    }

    /// Copy with the features of every modality not in `kept` set to zero,
    /// for training without those modalities.
    pub fn with_modalities_zeroed(&self, kept: &[Modality]) -> Dataset {
        let mut out = self.clone();
        for d in &mut out.dialogues {
            for (m, rows) in [(Modality::Text, &mut d.text), (Modality::Audio, &mut d.audio), (Modality::Visual, &mut d.visual)] {
                if !kept.contains(&m) {
                    rows.iter_mut().flatten().for_each(|v| *v = 0.0);
                }
            }
        }
        out
    }

    /// Consecutive batches of `batch_size` dialogues in the given order.
    pub fn batches(&self, order: &[usize], batch_size: usize, max_len: usize) -> Result<Vec<DialogueBatch>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        order
            .chunks(batch_size)
            .map(|idx| {
                let ds: Vec<&Dialogue> = idx.iter().map(|&i| &self.dialogues[i]).collect();
                DialogueBatch::from_dialogues(&ds, max_len, self.config.d_in)
            })
            .collect()
    }
}

impl DialogueBatch {
    /// Pads dialogues to `max_len`.
    pub fn from_dialogues(dialogues: &[&Dialogue], max_len: usize, d_in: [usize; 3]) -> Result<Self> {
        let b = dialogues.len();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        let rows = b * max_len;
        let mut features: [Tensor; 3] = std::array::from_fn(|m| Tensor::zeros(&[b, max_len, d_in[m]]));
        let mut speakers = vec![0; rows];
        let mut mask = vec![false; rows];
        let mut labels = vec![-1; rows];
        for (bi, d) in dialogues.iter().enumerate() {
            if d.len() > max_len {
                return Err(Error::InvalidArgument(format!(
                    "dialogue of length {} exceeds max_len {max_len}",
                    d.len()
                )));
            }
            for t in 0..d.len() {
                let r = bi * max_len + t;
                speakers[r] = d.speakers[t];
                mask[r] = true;
                labels[r] = d.labels[t];
                for m in Modality::ALL {
                    let src = &d.features(m)[t];
                    if src.len() != d_in[m.index()] {
                        return Err(Error::Shape(format!("{} feature width {}", m.name(), src.len())));
                    }
                    features[m.index()].row_mut(r).copy_from_slice(src);
                }
            }
        }
        Ok(Self {
            batch_size: b,
            max_len,
            features,
            speakers,
            mask,
            labels,
        })
    }
}

/// Draws the dataset described by `config`; a pure function of it.
pub fn generate(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let root = Rng::new(config.seed);
    let dialogues = (0..config.n_dialogues)
        .map(|i| generate_dialogue(config, &root.split((i / 2) as u64), i % 2 == 1))
        .collect();
    Ok(Dataset {
        config: config.clone(),
        dialogues,
    })
}

fn generate_dialogue(config: &GenConfig, rng: &Rng, mirrored: bool) -> Dialogue {
    let flip = if mirrored { -1.0 } else { 1.0 };
    let mut latent = rng.split(0);
    let mut noise = rng.split(1);
    let l = config.max_len;
    let len = l.div_ceil(2) + latent.below(l - l.div_ceil(2) + 1);
    let shifts = config.shift_count();
    let mut d = Dialogue {
        speakers: Vec::with_capacity(len),
        labels: Vec::with_capacity(len),
        text: Vec::with_capacity(len),
        audio: Vec::with_capacity(len),
        visual: Vec::with_capacity(len),
    };
    let mut last_label: Vec<Option<i64>> = vec![None; config.n_speakers];
    for _ in 0..len {
        let speaker = latent.below(config.n_speakers);
        let (s_t, s_a, s_v) = (flip * latent.sign(), flip * latent.sign(), flip * latent.sign());
        let shift_idx = latent.below(shifts);
        let copy_draw = latent.bernoulli(config.context_copy_prob);
        let planted = (parity_class(s_t, s_a, s_v) + config.shift_value(shift_idx)) % config.n_classes;
        let (label, flag) = match (copy_draw, last_label[speaker]) {
            (true, Some(prev)) => (prev, 1.0),
            _ => (planted as i64, 0.0),
        };
        last_label[speaker] = Some(label);
        let mut text = vec![0.0; config.d_in[0]];
        text[0] = s_t * SIGNAL;
        text[1] = flag * SIGNAL;
        let mut audio = vec![0.0; config.d_in[1]];
        audio[0] = s_a * SIGNAL;
        let mut visual = vec![0.0; config.d_in[2]];
        visual[0] = s_v * SIGNAL;
        if shifts > 1 {
            visual[1 + shift_idx] = SIGNAL;
        }
        for (m, row) in [&mut text, &mut audio, &mut visual].into_iter().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                let symmetric = !(m == 0 && k == 1 || m == 2 && k >= 1 && k <= shifts && shifts > 1);
                let sign = if symmetric { flip } else { 1.0 };
                *v += sign * config.noise * noise.normal();
            }
        }
        d.speakers.push(speaker);
        d.labels.push(label);
        d.text.push(text);
        d.audio.push(audio);
        d.visual.push(visual);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small(c: usize, noise: f64, rho: f64, seed: u64) -> GenConfig {
        GenConfig {
            n_dialogues: 60,
            max_len: 8,
            n_speakers: 3,
            d_in: [4, 3, 3 + c],
            n_classes: c,
            noise,
            context_copy_prob: rho,
            seed,
        }
    }

    #[test]
    fn parity_classes_pair_antipodes() {
        for &t in &[-1.0, 1.0] {
            for &a in &[-1.0, 1.0] {
                for &v in &[-1.0, 1.0] {
                    assert_eq!(parity_class(t, a, v), parity_class(-t, -a, -v));
                }
            }
        }
        assert_eq!(parity_class(1.0, 1.0, 1.0), 0);
        assert_eq!(parity_class(-1.0, 1.0, 1.0), 1);
        assert_eq!(parity_class(1.0, 1.0, -1.0), 2);
        assert_eq!(parity_class(1.0, -1.0, 1.0), 3);
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let cfg = small(4, 0.3, 0.2, 9);
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        for d in &a.dialogues {
            assert!(d.len() >= 4 && d.len() <= 8);
            d.validate(&cfg).unwrap();
        }
        assert_ne!(a, generate(&GenConfig { seed: 10, ..cfg }).unwrap());
    }

    #[test]
    fn twins_mirror_signs_and_share_labels() {
        let ds = generate(&small(6, 0.2, 0.3, 2)).unwrap();
        for pair in ds.dialogues.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.speakers, b.speakers);
            for t in 0..a.len() {
                assert_eq!(a.text[t][0], -b.text[t][0]);
                assert_eq!(a.text[t][1], b.text[t][1]);
                assert_eq!(a.audio[t], b.audio[t].iter().map(|v| -v).collect::<Vec<_>>());
                assert_eq!(a.visual[t][0], -b.visual[t][0]);
                assert_eq!(a.visual[t][1..7], b.visual[t][1..7]);
                assert_eq!(a.visual[t][7], -b.visual[t][7]);
            }
        }
        let (train, eval) = ds.split(0.25).unwrap();
        assert_eq!(train.dialogues.len() % 2, 0);
        assert_eq!(train.dialogues.len() + eval.dialogues.len(), 60);
    }

    #[test]
    fn batches_pad_with_sentinels() {
        let ds = generate(&small(4, 0.1, 0.0, 1)).unwrap();
        let order: Vec<usize> = (0..5).collect();
        let b = &ds.batches(&order, 5, 10).unwrap()[0];
        b.validate(ds.config.d_in, 3, 4).unwrap();
        assert_eq!(b.valid_count(), (0..5).map(|i| ds.dialogues[i].len()).sum::<usize>());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&GenConfig { n_classes: 1, ..small(4, 0.0, 0.0, 0) }).is_err());
        assert!(generate(&GenConfig { noise: -0.1, ..small(4, 0.0, 0.0, 0) }).is_err());
        assert!(generate(&GenConfig { d_in: [1, 1, 1], ..small(4, 0.0, 0.0, 0) }).is_err());
        assert!(generate(&GenConfig { d_in: [2, 1, 3], ..small(6, 0.0, 0.0, 0) }).is_err());
    }

    #[test]
    fn shift_layout() {
        assert_eq!(small(4, 0.0, 0.0, 0).shift_count(), 1);
        let c8 = small(8, 0.0, 0.0, 0);
        assert_eq!((c8.shift_count(), c8.shift_value(1)), (2, 4));
        let c6 = small(6, 0.0, 0.0, 0);
        assert_eq!((c6.shift_count(), c6.shift_value(5)), (6, 5));
    }
}
