//! Central finite differences, the reference every analytic gradient is checked against.

use crate::error::{Error, Result};
use crate::numeric::{Gradients, ParamStore, Tensor};

/// Central difference `(f(x+h) - f(x-h)) / 2h` for every scalar in `store`.
pub fn finite_diff_grad<F>(mut f: F, store: &ParamStore, h: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&ParamStore) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.value(id).len();
        let mut g = Tensor::zeros(store.value(id).shape());
        for k in 0..n {
            let orig = work.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = orig + h;
            let plus = f(&work);
            work.value_mut(id).data_mut()[k] = orig - h;
            let minus = f(&work);
            work.value_mut(id).data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective at `{}`[{k}]",
                    store.name(id)
                )));
            }
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Relative error between two gradients of one tensor: `|a-b| / max(|a|, |b|)`
/// in the Euclidean norm, falling back to the absolute error once both norms
/// are below `floor`.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < floor {
        diff
    } else {
        diff / scale
    }
}

/// Outcome of comparing an analytic gradient buffer with finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst per-tensor relative error and the name of that tensor.
    pub worst: f64,
    pub worst_param: String,
    pub scalars_checked: usize,
}

pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compare `analytic` against central differences of `f` over all of `store`.
pub fn check_gradients<F>(f: F, store: &ParamStore, analytic: &Gradients, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> f64,
{
    let numeric = finite_diff_grad(f, store, h)?;
    let mut report = GradCheckReport {
        worst: 0.0,
        worst_param: String::new(),
        scalars_checked: store.num_scalars(),
    };
    for (id, fd) in store.ids().zip(&numeric) {
        let err = relative_error(analytic.get(id).data(), fd.data(), GRADCHECK_FLOOR);
        if err > report.worst || report.worst_param.is_empty() {
            report.worst = err;
            report.worst_param = store.name(id).to_string();
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::vector(values.to_vec())).unwrap();
        s
    }

    #[test]
    fn square_at_three() {
        let s = store(&[3.0]);
        let g = finite_diff_grad(|p| p.entries()[0].value.data()[0].powi(2), &s, 1e-5).unwrap();
        assert!((g[0].data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_and_linear() {
        let s = store(&[0.3, -1.2, 4.0]);
        let g = finite_diff_grad(|_| 2.5, &s, 1e-5).unwrap();
        assert!(g[0].data().iter().all(|v| v.abs() < 1e-9));
        let g = finite_diff_grad(|p| p.entries()[0].value.data().iter().sum(), &s, 1e-5).unwrap();
        assert!(g[0].data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let s = store(&[0.0]);
        let r = finite_diff_grad(|p| 1.0 / p.entries()[0].value.data()[0].abs().min(0.0), &s, 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(&[1e-9], &[0.0], 1e-6), 1e-9);
        assert!((relative_error(&[1.0], &[1.1], 1e-6) - 0.1 / 1.1).abs() < 1e-12);
    }
}
