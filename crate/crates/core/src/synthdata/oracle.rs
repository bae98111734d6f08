//! Reference predictors for the planted task: the generator's own MAP decoder
//! and a linear (additive) probe.

use super::{parity_class, Dataset, Dialogue, GenConfig, SIGNAL};
use crate::encoder::Modality;
use crate::numeric::ops::softmax_inplace;

/// Decodes labels by reading the planted signs, the shift and the copy flag.
///
/// Under symmetric Gaussian noise with uniform sign priors this is the
/// maximum a posteriori rule for every latent, hence for the label.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecoder {
    config: GenConfig,
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl OracleDecoder {
    pub fn new(config: &GenConfig) -> Self {
        Self { config: config.clone() }
    }

    pub fn decode(&self, dialogue: &Dialogue) -> Vec<i64> {
        self.decode_with(dialogue, &Modality::ALL)
    }

    /// Decodes from the kept modalities only; withheld signs are guessed `+1`,
    /// a withheld shift as `0` and a withheld copy flag as off.
    pub fn decode_with(&self, dialogue: &Dialogue, kept: &[Modality]) -> Vec<i64> {
        let has = |m: Modality| kept.contains(&m);
        let shifts = self.config.shift_count();
        let mut last: Vec<Option<i64>> = vec![None; self.config.n_speakers];
        let mut out = Vec::with_capacity(dialogue.len());
        for t in 0..dialogue.len() {
            let text = &dialogue.text[t];
            let s_t = if has(Modality::Text) { sign(text[0]) } else { 1.0 };
            let flag = has(Modality::Text) && text[1] > 0.5 * SIGNAL;
            let s_a = if has(Modality::Audio) { sign(dialogue.audio[t][0]) } else { 1.0 };
            let visual = &dialogue.visual[t];
            let s_v = if has(Modality::Visual) { sign(visual[0]) } else { 1.0 };
            let shift_idx = if has(Modality::Visual) && shifts > 1 {
                (0..shifts)
                    .max_by(|&a, &b| visual[1 + a].total_cmp(&visual[1 + b]).then(b.cmp(&a)))
                    .unwrap_or(0)
            } else {
                0
            };
            let planted = ((parity_class(s_t, s_a, s_v) + self.config.shift_value(shift_idx))
                % self.config.n_classes) as i64;
            let speaker = dialogue.speakers[t];
            let label = match (flag, last[speaker]) {
                (true, Some(prev)) => prev,
                _ => planted,
            };
            last[speaker] = Some(label);
            out.push(label);
        }
        out
    }

    pub fn accuracy(&self, dataset: &Dataset, kept: &[Modality]) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for d in &dataset.dialogues {
            for (p, y) in self.decode_with(d, kept).iter().zip(&d.labels) {
                hit += usize::from(p == y);
                total += 1;
            }
        }
        hit as f64 / total.max(1) as f64
    }
}

/// Multinomial logistic regression on concatenated per-utterance features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `[c x (dim + 1)]`, bias last.
    pub weights: Vec<f64>,
    pub dim: usize,
    pub n_classes: usize,
}

fn rows(dataset: &Dataset) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for d in &dataset.dialogues {
        for t in 0..d.len() {
            let mut r = d.text[t].clone();
            r.extend_from_slice(&d.audio[t]);
            r.extend_from_slice(&d.visual[t]);
            x.push(r);
            y.push(d.labels[t] as usize);
        }
    }
    (x, y)
}

impl LinearProbe {
    /// Full-batch gradient descent on the mean cross-entropy.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, iterations: usize, lr: f64) -> Self {
        let dim = x.first().map_or(0, Vec::len);
        let w = dim + 1;
        let mut probe = Self {
            weights: vec![0.0; n_classes * w],
            dim,
            n_classes,
        };
        let n = x.len().max(1) as f64;
        let mut grad = vec![0.0; n_classes * w];
        for _ in 0..iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (xi, &yi) in x.iter().zip(y) {
                let p = probe.probabilities(xi);
                for k in 0..n_classes {
                    let e = p[k] - f64::from(u8::from(k == yi));
                    let g = &mut grad[k * w..(k + 1) * w];
                    for (gj, xj) in g.iter_mut().zip(xi) {
                        *gj += e * xj;
                    }
                    g[dim] += e;
                }
            }
            for (wv, g) in probe.weights.iter_mut().zip(&grad) {
                *wv -= lr * g / n;
            }
        }
        probe
    }

    pub fn fit_dataset(dataset: &Dataset, iterations: usize, lr: f64) -> Self {
        let (x, y) = rows(dataset);
        Self::fit(&x, &y, dataset.config.n_classes, iterations, lr)
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let w = self.dim + 1;
        let mut logits: Vec<f64> = (0..self.n_classes)
            .map(|k| {
                let row = &self.weights[k * w..(k + 1) * w];
                row[self.dim] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        softmax_inplace(&mut logits);
        logits
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.probabilities(x);
        (0..self.n_classes).fold(0, |best, k| if p[k] > p[best] { k } else { best })
    }

    pub fn accuracy(&self, dataset: &Dataset) -> f64 {
        let (x, y) = rows(dataset);
        let hits = x.iter().zip(&y).filter(|(xi, &yi)| self.predict(xi) == yi).count();
        hits as f64 / x.len().max(1) as f64
    }
}
