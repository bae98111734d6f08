//! Synergistic polynomial fusion.
//!
//! Per order `j`: `z_j = sum_m lambda_j^m * gelu(W_j^m h~^m) + w_j`; the orders
//! are multiplied elementwise, passed through a signed square root, projected
//! back to width `d` and classified.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::numeric::linalg::{add_col_sums, add_row_bias, gemm_nn, gemm_nt, gemm_tn};
use crate::numeric::ops::{gelu, gelu_grad, sigmoid, softmax_inplace, softmax_rows};
use crate::numeric::{glorot, Gradients, ParamId, ParamStore, Rng, Tensor};

/// Clamp on `|z|` in the signed-sqrt derivative.
pub const SQRT_EPS: f64 = 1e-12;

/// `gelu(W h)` for a single vector, `W` stored `[r x d]`.
pub fn project_order(h: &[f64], w: &Tensor) -> Result<Vec<f64>> {
    if w.shape().len() != 2 || w.cols() != h.len() {
        return Err(Error::Shape(format!(
            "projection {:?} does not accept a vector of length {}",
            w.shape(),
            h.len()
        )));
    }
    Ok((0..w.rows())
        .map(|i| gelu(w.row(i).iter().zip(h).map(|(a, b)| a * b).sum()))
        .collect())
}

/// `sum_m lambda_m z_m + w`.
pub fn gated_sum(z: &[&[f64]], lambdas: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if z.len() != lambdas.len() || z.iter().any(|v| v.len() != w.len()) {
        return Err(Error::Shape("gated sum operands disagree in length".into()));
    }
    let mut out = w.to_vec();
    for (zm, &l) in z.iter().zip(lambdas) {
        for (o, v) in out.iter_mut().zip(zm.iter()) {
            *o += l * v;
        }
    }
    Ok(out)
}

pub fn hadamard_chain(orders: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = orders
        .first()
        .ok_or_else(|| Error::InvalidArgument("polynomial order must be at least 1".into()))?;
    let mut out = first.clone();
    for z in &orders[1..] {
        if z.len() != out.len() {
            return Err(Error::Shape("hadamard operands disagree in length".into()));
        }
        for (o, v) in out.iter_mut().zip(z) {
            *o *= v;
        }
    }
    Ok(out)
}

pub fn signed_sqrt(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

pub fn signed_sqrt_grad(x: f64) -> f64 {
    0.5 / x.abs().max(SQRT_EPS).sqrt()
}

/// `softmax(W_cls^T (W_out^T zhat + b_out) + b_cls)`, with `W_out` `[r x d]`
/// and `W_cls` `[d x c]`.
pub fn classify_fused(
    zhat: &[f64],
    w_out: &Tensor,
    b_out: &[f64],
    w_cls: &Tensor,
    b_cls: &[f64],
) -> Result<Vec<f64>> {
    let (r, d, c) = (zhat.len(), b_out.len(), b_cls.len());
    if w_out.shape() != [r, d] || w_cls.shape() != [d, c] {
        return Err(Error::Shape("classifier weights do not match r, d, c".into()));
    }
    let mut u = b_out.to_vec();
    gemm_nn(zhat, w_out.data(), 1, r, d, &mut u, true);
    let mut logits = b_cls.to_vec();
    gemm_nn(&u, w_cls.data(), 1, d, c, &mut logits, true);
    softmax_inplace(&mut logits);
    Ok(logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpfConfig {
    pub d_model: usize,
    pub order: usize,
    pub rank: usize,
    pub n_classes: usize,
    /// Modality-specific projections with static gates; when off, one
    /// projection per order is shared and every gate is fixed at 1.
    pub msp_on: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spf {
    pub config: SpfConfig,
    /// `[order][modality]`; all three entries alias when MSP is off.
    pub proj: Vec<[Linear; 3]>,
    /// Raw gates `[order x 3]`, present only with MSP.
    pub gates: Option<ParamId>,
    /// Constant path `w_j`, `[order x r]`.
    pub constant: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub w_cls: ParamId,
    pub b_cls: ParamId,
}

/// Batched intermediates for `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedState {
    pub rows: usize,
    /// Pre-activations `W_j^m h~^m`, indexed `[j][m]`, each `[n x r]`.
    pub pre: Vec<[Vec<f64>; 3]>,
    /// `z_j^m = gelu(pre)`.
    pub z_jm: Vec<[Vec<f64>; 3]>,
    /// Gated sums `z_j`, each `[n x r]`.
    pub z_j: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub zhat: Vec<f64>,
    /// Shared-space projection `[n x d]`.
    pub u: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Spf {
    pub fn register(store: &mut ParamStore, rng: &Rng, config: SpfConfig) -> Result<Self> {
        let SpfConfig {
            d_model: d,
            order: p,
            rank: r,
            n_classes: c,
            msp_on,
        } = config;
        if p == 0 || r == 0 || d == 0 || c < 2 {
            return Err(Error::InvalidArgument(format!(
                "fusion needs order >= 1, rank >= 1 and >= 2 classes (got p={p}, r={r}, c={c})"
            )));
        }
        let mut proj = Vec::with_capacity(p);
        for j in 1..=p {
            if msp_on {
                let mut per = Vec::with_capacity(3);
                for m in ["text", "audio", "visual"] {
                    per.push(Linear::register(store, rng, &format!("spf.proj{j}.{m}"), d, r, false)?);
                }
                proj.push([per[0], per[1], per[2]]);
            } else {
                let shared = Linear::register(store, rng, &format!("spf.proj{j}"), d, r, false)?;
                proj.push([shared; 3]);
            }
        }
        let gates = if msp_on {
            Some(store.add("spf.gate", Tensor::zeros(&[p, 3]))?)
        } else {
            None
        };
        let constant = store.add("spf.const", Tensor::filled(&[p, r], 1.0))?;
        let w_out = store.add("spf.out.w", glorot(&mut rng.split_named("spf.out.w"), &[r, d], r, d))?;
        let b_out = store.add("spf.out.b", Tensor::zeros(&[d]))?;
        let w_cls = store.add("spf.cls.w", glorot(&mut rng.split_named("spf.cls.w"), &[d, c], d, c))?;
        let b_cls = store.add("spf.cls.b", Tensor::zeros(&[c]))?;
        Ok(Self {
            config,
            proj,
            gates,
            constant,
            w_out,
            b_out,
            w_cls,
            b_cls,
        })
    }

    /// Effective gate `lambda_j^m`.
    pub fn lambda(&self, store: &ParamStore, j: usize, m: usize) -> f64 {
        match self.gates {
            Some(g) => sigmoid(store.value(g).data()[j * 3 + m]),
            None => 1.0,
        }
    }

    /// `h_tilde[m]` are `[n x d]` row blocks.
    pub fn forward(&self, store: &ParamStore, h_tilde: [&[f64]; 3]) -> Result<FusedState> {
        let SpfConfig {
            d_model: d,
            order: p,
            rank: r,
            n_classes: c,
            ..
        } = self.config;
        let n = h_tilde[0].len() / d;
        if h_tilde.iter().any(|h| h.len() != n * d) || n == 0 {
            return Err(Error::Shape(format!("fusion inputs must be [n x {d}]")));
        }
        let constant = store.value(self.constant).data();
        let mut pre = Vec::with_capacity(p);
        let mut z_jm = Vec::with_capacity(p);
        let mut z_j = Vec::with_capacity(p);
        for j in 0..p {
            let mut pre_j: Vec<Vec<f64>> = Vec::with_capacity(3);
            let mut act_j: Vec<Vec<f64>> = Vec::with_capacity(3);
            let mut sum = vec![0.0; n * r];
            add_row_bias(&mut sum, &constant[j * r..(j + 1) * r]);
            for m in 0..3 {
                let pm = self.proj[j][m].forward(store, h_tilde[m], n);
                let am: Vec<f64> = pm.iter().map(|&x| gelu(x)).collect();
                let lam = self.lambda(store, j, m);
                for (s, a) in sum.iter_mut().zip(&am) {
                    *s += lam * a;
                }
                pre_j.push(pm);
                act_j.push(am);
            }
            let [p0, p1, p2]: [Vec<f64>; 3] = pre_j.try_into().expect("three modalities");
            let [a0, a1, a2]: [Vec<f64>; 3] = act_j.try_into().expect("three modalities");
            pre.push([p0, p1, p2]);
            z_jm.push([a0, a1, a2]);
            z_j.push(sum);
        }
        let z = hadamard_chain(&z_j)?;
        let zhat: Vec<f64> = z.iter().map(|&v| signed_sqrt(v)).collect();
        let mut u = vec![0.0; n * d];
        gemm_nn(&zhat, store.value(self.w_out).data(), n, r, d, &mut u, false);
        add_row_bias(&mut u, store.value(self.b_out).data());
        let mut logits = vec![0.0; n * c];
        gemm_nn(&u, store.value(self.w_cls).data(), n, d, c, &mut logits, false);
        add_row_bias(&mut logits, store.value(self.b_cls).data());
        let probs = softmax_rows(&logits, c);
        Ok(FusedState {
            rows: n,
            pre,
            z_jm,
            z_j,
            z,
            zhat,
            u,
            logits,
            probs,
        })
    }

    /// Backpropagates `dlogits [n x c]`; returns `d h_tilde` per modality.
    pub fn backward(
        &self,
        store: &ParamStore,
        h_tilde: [&[f64]; 3],
        state: &FusedState,
        dlogits: &[f64],
        grads: &mut Gradients,
    ) -> [Vec<f64>; 3] {
        let SpfConfig {
            d_model: d,
            order: p,
            rank: r,
            n_classes: c,
            ..
        } = self.config;
        let n = state.rows;
        gemm_tn(&state.u, dlogits, n, d, c, grads.slot(self.w_cls), true);
        add_col_sums(dlogits, grads.slot(self.b_cls));
        let mut du = vec![0.0; n * d];
        gemm_nt(dlogits, store.value(self.w_cls).data(), n, c, d, &mut du, false);
        gemm_tn(&state.zhat, &du, n, r, d, grads.slot(self.w_out), true);
        add_col_sums(&du, grads.slot(self.b_out));
        let mut dz = vec![0.0; n * r];
        gemm_nt(&du, store.value(self.w_out).data(), n, d, r, &mut dz, false);
        for (g, &z) in dz.iter_mut().zip(&state.z) {
            *g *= signed_sqrt_grad(z);
        }
        let mut dh: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n * d]);
        for j in 0..p {
            let mut dzj = dz.clone();
            for (i, other) in state.z_j.iter().enumerate() {
                if i != j {
                    for (g, v) in dzj.iter_mut().zip(other) {
                        *g *= v;
                    }
                }
            }
            {
                let cgrad = grads.slot(self.constant);
                add_col_sums(&dzj, &mut cgrad[j * r..(j + 1) * r]);
            }
            for m in 0..3 {
                let lam = self.lambda(store, j, m);
                if let Some(g) = self.gates {
                    let s: f64 = dzj.iter().zip(&state.z_jm[j][m]).map(|(a, b)| a * b).sum();
                    grads.slot(g)[j * 3 + m] += s * lam * (1.0 - lam);
                }
                let dpre: Vec<f64> = dzj
                    .iter()
                    .zip(&state.pre[j][m])
                    .map(|(&g, &x)| lam * g * gelu_grad(x))
                    .collect();
                self.proj[j][m].backward(store, h_tilde[m], &dpre, n, grads, Some(&mut dh[m]));
            }
        }
        dh
    }
}

/// Fusion by concatenation: `logits = [h~t; h~a; h~v] W + b`, `W` `[3d x c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcatClassifier {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_model: usize,
    pub n_classes: usize,
}

impl ConcatClassifier {
    pub fn register(store: &mut ParamStore, rng: &Rng, d_model: usize, n_classes: usize) -> Result<Self> {
        let w = glorot(&mut rng.split_named("cat.w"), &[3 * d_model, n_classes], 3 * d_model, n_classes);
        Ok(Self {
            weight: store.add("cat.w", w)?,
            bias: store.add("cat.b", Tensor::zeros(&[n_classes]))?,
            d_model,
            n_classes,
        })
    }

    fn concat(&self, h_tilde: [&[f64]; 3]) -> Vec<f64> {
        let d = self.d_model;
        let n = h_tilde[0].len() / d;
        let mut x = Vec::with_capacity(n * 3 * d);
        for i in 0..n {
            for h in h_tilde {
                x.extend_from_slice(&h[i * d..(i + 1) * d]);
            }
        }
        x
    }

    pub fn forward(&self, store: &ParamStore, h_tilde: [&[f64]; 3]) -> Result<Vec<f64>> {
        let (d, c) = (self.d_model, self.n_classes);
        let n = h_tilde[0].len() / d;
        if n == 0 || h_tilde.iter().any(|h| h.len() != n * d) {
            return Err(Error::Shape(format!("concatenation inputs must be [n x {d}]")));
        }
        let x = self.concat(h_tilde);
        let mut logits = vec![0.0; n * c];
        gemm_nn(&x, store.value(self.weight).data(), n, 3 * d, c, &mut logits, false);
        add_row_bias(&mut logits, store.value(self.bias).data());
        Ok(logits)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        h_tilde: [&[f64]; 3],
        dlogits: &[f64],
        grads: &mut Gradients,
    ) -> [Vec<f64>; 3] {
        let (d, c) = (self.d_model, self.n_classes);
        let n = h_tilde[0].len() / d;
        let x = self.concat(h_tilde);
        gemm_tn(&x, dlogits, n, 3 * d, c, grads.slot(self.weight), true);
        add_col_sums(dlogits, grads.slot(self.bias));
        let mut dx = vec![0.0; n * 3 * d];
        gemm_nt(dlogits, store.value(self.weight).data(), n, c, 3 * d, &mut dx, false);
        let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n * d));
        for row in dx.chunks(3 * d) {
            for (m, o) in out.iter_mut().enumerate() {
                o.extend_from_slice(&row[m * d..(m + 1) * d]);
            }
        }
        out
    }
}

/// The fused branch: polynomial fusion or its concatenation ablation.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionHead {
    Spf(Spf),
    Concat(ConcatClassifier),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionCache {
    Spf(FusedState),
    Concat,
}

impl FusionHead {
    /// Returns fused logits `[n x c]`.
    pub fn forward(&self, store: &ParamStore, h_tilde: [&[f64]; 3]) -> Result<(Vec<f64>, FusionCache)> {
        match self {
            FusionHead::Spf(s) => {
                let st = s.forward(store, h_tilde)?;
                Ok((st.logits.clone(), FusionCache::Spf(st)))
            }
            FusionHead::Concat(cat) => Ok((cat.forward(store, h_tilde)?, FusionCache::Concat)),
        }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        h_tilde: [&[f64]; 3],
        cache: &FusionCache,
        dlogits: &[f64],
        grads: &mut Gradients,
    ) -> [Vec<f64>; 3] {
        match (self, cache) {
            (FusionHead::Spf(s), FusionCache::Spf(st)) => s.backward(store, h_tilde, st, dlogits, grads),
            (FusionHead::Concat(cat), _) => cat.backward(store, h_tilde, dlogits, grads),
            (FusionHead::Spf(_), FusionCache::Concat) => unreachable!("cache from a different head"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn projection_cases() {
        let z = project_order(&[1.0, -2.0, 3.0], &Tensor::zeros(&[2, 3])).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        let eye = tensor(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let z = project_order(&[12.0, 15.0], &eye).unwrap();
        assert!((z[0] - 12.0).abs() < 1e-12 && (z[1] - 15.0).abs() < 1e-12);
        let w = tensor(&[2, 3], &[0.5, -1.0, 0.25, 2.0, 0.0, -0.5]);
        let h = [0.3, 0.7, -1.1];
        let z = project_order(&h, &w).unwrap();
        // rows: 0.15 - 0.7 - 0.275 = -0.825 ; 0.6 + 0.55 = 1.15
        assert!((z[0] - gelu(-0.825)).abs() < 1e-15);
        assert!((z[1] - gelu(1.15)).abs() < 1e-15);
        assert!(project_order(&h, &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn gated_sum_cases() {
        let a = [1.0, 2.0];
        let b = [3.0, -1.0];
        let c = [0.5, 0.5];
        let half = sigmoid(0.0);
        let z = gated_sum(&[&a, &b, &c], &[half; 3], &[0.0, 0.0]).unwrap();
        assert_eq!(z, vec![2.25, 0.75]);
        let zero = [0.0, 0.0];
        let w = [0.3, -0.2];
        assert_eq!(gated_sum(&[&zero, &zero, &zero], &[0.7; 3], &w).unwrap(), w.to_vec());
        let z = gated_sum(&[&[1.0, 1.0], &[-1.0, -1.0]], &[0.25, 0.75], &[0.0, 0.0]).unwrap();
        assert_eq!(z, vec![-0.5, -0.5]);
    }

    #[test]
    fn hadamard_cases() {
        assert_eq!(hadamard_chain(&[vec![2.0, -3.0]]).unwrap(), vec![2.0, -3.0]);
        assert_eq!(
            hadamard_chain(&[vec![2.0, -3.0], vec![0.5, 2.0]]).unwrap(),
            vec![1.0, -6.0]
        );
        assert_eq!(
            hadamard_chain(&[vec![1.5, 4.0], vec![1.0, 1.0]]).unwrap(),
            vec![1.5, 4.0]
        );
        assert!(hadamard_chain(&[]).is_err());
    }

    #[test]
    fn signed_sqrt_cases() {
        assert_eq!(signed_sqrt(4.0), 2.0);
        assert_eq!(signed_sqrt(-9.0), -3.0);
        assert_eq!(signed_sqrt(0.0), 0.0);
        assert!(signed_sqrt_grad(0.0).is_finite());
        assert!((signed_sqrt_grad(4.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn classifier_cases() {
        let p = classify_fused(&[0.3, -0.2], &Tensor::zeros(&[2, 3]), &[0.0; 3], &Tensor::zeros(&[3, 4]), &[0.0; 4])
            .unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = classify_fused(&[0.3, -0.2], &Tensor::zeros(&[2, 3]), &[0.0; 3], &Tensor::zeros(&[3, 3]), &[10.0, 0.0, 0.0])
            .unwrap();
        assert!(p[0] > 0.9999);
        // r=2, d=3, c=2 against a spelled-out product
        let zhat = [0.4, -1.2];
        let w_out = tensor(&[2, 3], &[1.0, 0.5, -0.3, 0.2, -0.7, 0.9]);
        let b_out = [0.1, 0.0, -0.1];
        let w_cls = tensor(&[3, 2], &[0.6, -0.4, 0.3, 0.8, -0.5, 0.2]);
        let b_cls = [0.05, -0.05];
        let u: Vec<f64> = (0..3)
            .map(|k| b_out[k] + zhat[0] * w_out.at2(0, k) + zhat[1] * w_out.at2(1, k))
            .collect();
        let l: Vec<f64> = (0..2)
            .map(|k| b_cls[k] + (0..3).map(|i| u[i] * w_cls.at2(i, k)).sum::<f64>())
            .collect();
        let e0 = (l[0] - l[1]).exp();
        let want0 = e0 / (e0 + 1.0);
        let p = classify_fused(&zhat, &w_out, &b_out, &w_cls, &b_cls).unwrap();
        assert!((p[0] - want0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
