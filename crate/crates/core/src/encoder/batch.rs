use crate::encoder::Modality;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Padded mini-batch of dialogues.
///
/// Row `b * max_len + t` holds utterance `t` of dialogue `b`. Padded rows carry
/// zero features, speaker 0, label `-1` and `mask = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueBatch {
    pub batch_size: usize,
    pub max_len: usize,
    /// Per modality, `[batch_size x max_len x d_in]`.
    pub features: [Tensor; 3],
    pub speakers: Vec<usize>,
    pub mask: Vec<bool>,
    pub labels: Vec<i64>,
}

impl DialogueBatch {
    pub fn rows(&self) -> usize {
        self.batch_size * self.max_len
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn features(&self, m: Modality) -> &Tensor {
        &self.features[m.index()]
    }

    pub fn d_in(&self) -> [usize; 3] {
        [
            self.features[0].cols(),
            self.features[1].cols(),
            self.features[2].cols(),
        ]
    }

    /// Checks layout, padding conventions and value ranges.
    pub fn validate(&self, d_in: [usize; 3], n_speakers: usize, n_classes: usize) -> Result<()> {
        let rows = self.rows();
        if self.speakers.len() != rows || self.mask.len() != rows || self.labels.len() != rows {
            return Err(Error::Shape(format!(
                "batch index arrays must have {rows} rows"
            )));
        }
        for m in Modality::ALL {
            let f = self.features(m);
            let want = [self.batch_size, self.max_len, d_in[m.index()]];
            if f.shape() != want {
                return Err(Error::Shape(format!(
                    "{} features have shape {:?}, expected {want:?}",
                    m.name(),
                    f.shape()
                )));
            }
        }
        for r in 0..rows {
            if self.mask[r] {
                let y = self.labels[r];
                if y < 0 || y as usize >= n_classes {
                    return Err(Error::LabelOutOfRange {
                        label: y,
                        classes: n_classes,
                    });
                }
                if self.speakers[r] >= n_speakers {
                    return Err(Error::InvalidArgument(format!(
                        "speaker id {} out of range for {n_speakers} speakers",
                        self.speakers[r]
                    )));
                }
            } else {
                if self.labels[r] != -1 {
                    return Err(Error::InvalidArgument(format!(
                        "padded row {r} must carry label -1"
                    )));
                }
                if Modality::ALL
                    .iter()
                    .any(|&m| self.features(m).row(r).iter().any(|&v| v != 0.0))
                {
                    return Err(Error::InvalidArgument(format!(
                        "padded row {r} must carry zero features"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy with the features of every modality not in `kept` set to zero.
    pub fn with_modalities_zeroed(&self, kept: &[Modality]) -> DialogueBatch {
        let mut out = self.clone();
        for m in Modality::ALL {
            if !kept.contains(&m) {
                out.features[m.index()].fill(0.0);
            }
        }
        out
    }

    /// Copy padded out to a longer `max_len`.
    pub fn padded_to(&self, max_len: usize) -> Result<DialogueBatch> {
        if max_len < self.max_len {
            return Err(Error::InvalidArgument(format!(
                "cannot shrink max_len from {} to {max_len}",
                self.max_len
            )));
        }
        let rows = self.batch_size * max_len;
        let remap = |b: usize, t: usize| b * max_len + t;
        let mut speakers = vec![0; rows];
        let mut mask = vec![false; rows];
        let mut labels = vec![-1; rows];
        let mut features = self.features.clone().map(|f| {
            let d = f.cols();
            Tensor::zeros(&[self.batch_size, max_len, d])
        });
        for b in 0..self.batch_size {
            for t in 0..self.max_len {
                let src = b * self.max_len + t;
                let dst = remap(b, t);
                speakers[dst] = self.speakers[src];
                mask[dst] = self.mask[src];
                labels[dst] = self.labels[src];
                for m in 0..3 {
                    let row = self.features[m].row(src).to_vec();
                    features[m].row_mut(dst).copy_from_slice(&row);
                }
            }
        }
        Ok(DialogueBatch {
            batch_size: self.batch_size,
            max_len,
            features,
            speakers,
            mask,
            labels,
        })
    }

    /// Reorders dialogues: dialogue `i` of the result is dialogue `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> DialogueBatch {
        let l = self.max_len;
        let mut out = self.clone();
        for (dst_b, &src_b) in order.iter().enumerate() {
            for t in 0..l {
                let (dst, src) = (dst_b * l + t, src_b * l + t);
                out.speakers[dst] = self.speakers[src];
                out.mask[dst] = self.mask[src];
                out.labels[dst] = self.labels[src];
                for m in 0..3 {
                    let row = self.features[m].row(src).to_vec();
                    out.features[m].row_mut(dst).copy_from_slice(&row);
                }
            }
        }
        out
    }
}
