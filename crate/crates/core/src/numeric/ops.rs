//! Elementwise activations and row-wise softmax.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Standard normal CDF, `0.5 * (1 + erf(x / sqrt 2))`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax of one row, max-subtracted.
pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_inplace(&mut out);
    out
}

/// `softmax(logits / temperature)`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let mut out: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    softmax_inplace(&mut out);
    Ok(out)
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(())
}

/// Row-wise softmax of an `[n x c]` matrix.
pub fn softmax_rows(logits: &[f64], c: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(c) {
        softmax_inplace(row);
    }
    out
}

/// Given softmax output `p` and upstream `dp`, returns `dlogits`.
pub fn softmax_backward(p: &[f64], dp: &[f64], dlogits: &mut [f64]) {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in dlogits.iter_mut().zip(p).zip(dp) {
        *o = pi * (gi - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-9);
        // Phi(-1) = 0.158655253931457...
        assert!((gelu(-1.0) + 0.158655).abs() < 1e-6);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn softmax_temperature_examples() {
        let p = softmax_with_temperature(&[2.0, 2.0, 2.0], 3.0).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let e = std::f64::consts::E;
        let p = softmax_with_temperature(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.731059).abs() < 1e-6);
        assert!((p[1] - 0.268941).abs() < 1e-6);
        let p = softmax_with_temperature(&[1.0, 0.0], 4.0).unwrap();
        let q = 0.25f64.exp() / (0.25f64.exp() + 1.0);
        assert!((p[0] - q).abs() < 1e-12);
        assert!((p[0] - 0.562177).abs() < 1e-6);
        assert!((p[1] - 0.437823).abs() < 1e-6);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(softmax_with_temperature(&[1.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[1.0], -2.0).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
