//! Supervision signals: fused cross-entropy `L1`, unimodal cross-entropy `L2`
//! and temperature-scaled self-distillation `L3`.
//!
//! All losses skip rows with `mask = false` outright rather than multiplying
//! them by zero, so padding never perturbs a sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::{add_col_sums, add_row_bias, gemm_nn, gemm_nt, gemm_tn};
use crate::numeric::ops::{check_temperature, softmax_inplace};
use crate::numeric::{glorot, Gradients, ParamId, ParamStore, Rng, Tensor};

/// Floor applied inside every `log`.
pub const LOG_EPS: f64 = 1e-12;

/// Per-modality linear classifiers on `h_tilde`, weights stored `[d x c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnimodalHeads {
    pub weight: [ParamId; 3],
    pub bias: [ParamId; 3],
    pub d_model: usize,
    pub n_classes: usize,
}

impl UnimodalHeads {
    pub fn register(store: &mut ParamStore, rng: &Rng, d_model: usize, n_classes: usize) -> Result<Self> {
        let mut weight = Vec::with_capacity(3);
        let mut bias = Vec::with_capacity(3);
        for m in ["text", "audio", "visual"] {
            let name = format!("head.{m}.w");
            let w = glorot(&mut rng.split_named(&name), &[d_model, n_classes], d_model, n_classes);
            weight.push(store.add(name, w)?);
            bias.push(store.add(format!("head.{m}.b"), Tensor::zeros(&[n_classes]))?);
        }
        Ok(Self {
            weight: [weight[0], weight[1], weight[2]],
            bias: [bias[0], bias[1], bias[2]],
            d_model,
            n_classes,
        })
    }

    /// Logits `[n x c]` for modality `m`.
    pub fn forward(&self, store: &ParamStore, m: usize, h: &[f64]) -> Vec<f64> {
        let (d, c) = (self.d_model, self.n_classes);
        let n = h.len() / d;
        let mut out = vec![0.0; n * c];
        gemm_nn(h, store.value(self.weight[m]).data(), n, d, c, &mut out, false);
        add_row_bias(&mut out, store.value(self.bias[m]).data());
        out
    }

    /// Accumulates head gradients; returns `dh`.
    pub fn backward(&self, store: &ParamStore, m: usize, h: &[f64], dlogits: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let (d, c) = (self.d_model, self.n_classes);
        let n = h.len() / d;
        gemm_tn(h, dlogits, n, d, c, grads.slot(self.weight[m]), true);
        add_col_sums(dlogits, grads.slot(self.bias[m]));
        let mut dh = vec![0.0; n * d];
        gemm_nt(dlogits, store.value(self.weight[m]).data(), n, c, d, &mut dh, false);
        dh
    }
}

fn valid_total(mask: &[bool]) -> Result<f64> {
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(n as f64)
}

fn check_labels(labels: &[i64], mask: &[bool], c: usize) -> Result<()> {
    for (&y, &m) in labels.iter().zip(mask) {
        if m && (y < 0 || y as usize >= c) {
            return Err(Error::LabelOutOfRange { label: y, classes: c });
        }
    }
    Ok(())
}

/// `-(1/sum mu) sum_i mu_i log p_i[y_i]` over probability rows `[n x c]`.
pub fn masked_cross_entropy(probs: &[f64], labels: &[i64], mask: &[bool], c: usize) -> Result<f64> {
    if probs.len() != labels.len() * c || mask.len() != labels.len() {
        return Err(Error::Shape("probabilities, labels and mask disagree".into()));
    }
    let total = valid_total(mask)?;
    check_labels(labels, mask, c)?;
    let mut sum = 0.0;
    for (i, row) in probs.chunks_exact(c).enumerate() {
        if mask[i] {
            sum -= row[labels[i] as usize].max(LOG_EPS).ln();
        }
    }
    Ok(sum / total)
}

/// `L2` with every modality term under the single `1/sum mu` normalizer.
pub fn unimodal_ce(probs: [&[f64]; 3], labels: &[i64], mask: &[bool], c: usize) -> Result<f64> {
    let mut sum = 0.0;
    for p in probs {
        sum += masked_cross_entropy(p, labels, mask, c)?;
    }
    Ok(sum)
}

/// `KL(softmax(t/T) || softmax(s/T))` for one row.
pub fn kl_row(teacher: &[f64], student: &[f64], temperature: f64) -> f64 {
    let (p, q) = (tempered(teacher, temperature), tempered(student, temperature));
    p.iter()
        .zip(&q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.max(LOG_EPS).ln() - qi.max(LOG_EPS).ln()))
        .sum::<f64>()
        .max(0.0)
}

fn tempered(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut p: Vec<f64> = logits.iter().map(|&v| v / temperature).collect();
    softmax_inplace(&mut p);
    p
}

/// `L3`: `(1/sum mu) sum_i mu_i sum_m KL(teacher_i || student_i^m)` on logits `[n x c]`.
pub fn distill_kl(fused: &[f64], unimodal: [&[f64]; 3], temperature: f64, mask: &[bool], c: usize) -> Result<f64> {
    Ok(distill_kl_per_modality(fused, unimodal, temperature, mask, c)?.iter().sum())
}

pub fn distill_kl_per_modality(
    fused: &[f64],
    unimodal: [&[f64]; 3],
    temperature: f64,
    mask: &[bool],
    c: usize,
) -> Result<[f64; 3]> {
    check_temperature(temperature)?;
    if fused.len() != mask.len() * c || unimodal.iter().any(|u| u.len() != fused.len()) {
        return Err(Error::Shape("distillation logits and mask disagree".into()));
    }
    let total = valid_total(mask)?;
    let mut out = [0.0; 3];
    for (m, s) in unimodal.iter().enumerate() {
        for (i, (t_row, s_row)) in fused.chunks_exact(c).zip(s.chunks_exact(c)).enumerate() {
            if mask[i] {
                out[m] += kl_row(t_row, s_row, temperature);
            }
        }
        out[m] /= total;
    }
    Ok(out)
}

/// Values of all three objectives on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossReport {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l2_per: [f64; 3],
    pub l3_per: [f64; 3],
}

impl LossReport {
    pub fn as_array(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().chain(&self.l2_per).chain(&self.l3_per).all(|v| v.is_finite())
    }
}

/// Logit-space gradients of a weighted loss `w1 L1 + w2 L2 + w3 L3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrads {
    pub fused: Vec<f64>,
    pub unimodal: [Vec<f64>; 3],
}

/// Evaluated objectives with everything needed for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Objectives {
    pub report: LossReport,
    c: usize,
    temperature: f64,
    mask: Vec<bool>,
    labels: Vec<i64>,
    fused_probs: Vec<f64>,
    uni_probs: [Vec<f64>; 3],
    teacher_t: Vec<f64>,
    student_t: [Vec<f64>; 3],
}

impl Objectives {
    pub fn evaluate(
        fused: &[f64],
        unimodal: [&[f64]; 3],
        labels: &[i64],
        mask: &[bool],
        c: usize,
        temperature: f64,
    ) -> Result<Self> {
        check_temperature(temperature)?;
        let rows = |x: &[f64]| -> Vec<f64> {
            let mut out = x.to_vec();
            out.chunks_exact_mut(c).for_each(softmax_inplace);
            out
        };
        let fused_probs = rows(fused);
        let uni_probs = unimodal.map(rows);
        let l1 = masked_cross_entropy(&fused_probs, labels, mask, c)?;
        let mut l2_per = [0.0; 3];
        for m in 0..3 {
            l2_per[m] = masked_cross_entropy(&uni_probs[m], labels, mask, c)?;
        }
        let l3_per = distill_kl_per_modality(fused, unimodal, temperature, mask, c)?;
        let teacher_t = tempered_rows(fused, c, temperature);
        let student_t = unimodal.map(|u| tempered_rows(u, c, temperature));
        Ok(Self {
            report: LossReport {
                l1,
                l2: l2_per.iter().sum(),
                l3: l3_per.iter().sum(),
                l2_per,
                l3_per,
            },
            c,
            temperature,
            mask: mask.to_vec(),
            labels: labels.to_vec(),
            fused_probs,
            uni_probs,
            teacher_t,
            student_t,
        })
    }

    pub fn fused_probs(&self) -> &[f64] {
        &self.fused_probs
    }

    pub fn unimodal_probs(&self, m: usize) -> &[f64] {
        &self.uni_probs[m]
    }

    /// Gradients of `sum_i weights[i] * L_i` with respect to the logits.
    ///
    /// With `teacher_grad` off the fused logits receive nothing from `L3`.
    pub fn logit_grads(&self, weights: [f64; 3], teacher_grad: bool) -> LogitGrads {
        let c = self.c;
        let n = self.mask.len();
        let total = self.mask.iter().filter(|&&m| m).count() as f64;
        let mut fused = vec![0.0; n * c];
        let mut unimodal: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n * c]);
        let inv_t = 1.0 / self.temperature;
        for i in 0..n {
            if !self.mask[i] {
                continue;
            }
            let y = self.labels[i] as usize;
            let r = i * c..(i + 1) * c;
            if weights[0] != 0.0 {
                ce_grad(&self.fused_probs[r.clone()], y, weights[0] / total, &mut fused[r.clone()]);
            }
            for m in 0..3 {
                if weights[1] != 0.0 {
                    ce_grad(&self.uni_probs[m][r.clone()], y, weights[1] / total, &mut unimodal[m][r.clone()]);
                }
                if weights[2] != 0.0 {
                    let scale = weights[2] / total * inv_t;
                    let p = &self.teacher_t[r.clone()];
                    let q = &self.student_t[m][r.clone()];
                    for k in 0..c {
                        unimodal[m][i * c + k] += scale * (q[k] - p[k]);
                    }
                    if teacher_grad {
                        let kl: f64 = p
                            .iter()
                            .zip(q)
                            .filter(|(&pi, _)| pi > 0.0)
                            .map(|(&pi, &qi)| pi * (pi.max(LOG_EPS).ln() - qi.max(LOG_EPS).ln()))
                            .sum();
                        for k in 0..c {
                            if p[k] > 0.0 {
                                let lr = p[k].max(LOG_EPS).ln() - q[k].max(LOG_EPS).ln();
                                fused[i * c + k] += scale * p[k] * (lr - kl);
                            }
                        }
                    }
                }
            }
        }
        LogitGrads { fused, unimodal }
    }
}

fn tempered_rows(logits: &[f64], c: usize, temperature: f64) -> Vec<f64> {
    let mut out: Vec<f64> = logits.iter().map(|&v| v / temperature).collect();
    out.chunks_exact_mut(c).for_each(softmax_inplace);
    out
}

/// `scale * (p - onehot(y))`, zero if the log clamp is active.
fn ce_grad(p: &[f64], y: usize, scale: f64, out: &mut [f64]) {
    if p[y] < LOG_EPS {
        return;
    }
    for (k, (o, &pk)) in out.iter_mut().zip(p).enumerate() {
        *o += scale * (pk - if k == y { 1.0 } else { 0.0 });
    }
}
