//! Contextual integration: `h~ = W [h_ma; h_ia] + b` with `W` of shape `d x 2d`.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::numeric::{Gradients, ParamStore};

fn concat(h_ma: &[f64], h_ia: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h_ma.len() * 2);
    for (a, b) in h_ma.chunks(d).zip(h_ia.chunks(d)) {
        out.extend_from_slice(a);
        out.extend_from_slice(b);
    }
    out
}

pub fn integrate_context(
    store: &ParamStore,
    fuse: &Linear,
    h_ma: &[f64],
    h_ia: &[f64],
) -> Result<Vec<f64>> {
    let d = fuse.fan_out;
    if fuse.fan_in != 2 * d || h_ma.len() != h_ia.len() || !h_ma.len().is_multiple_of(d) {
        return Err(Error::Shape(format!(
            "integration expects two [rows x {d}] inputs and a {d} x {} map",
            2 * d
        )));
    }
    Ok(fuse.forward(store, &concat(h_ma, h_ia, d), h_ma.len() / d))
}

/// Returns `(d h_ma, d h_ia)`.
pub fn integrate_backward(
    store: &ParamStore,
    fuse: &Linear,
    h_ma: &[f64],
    h_ia: &[f64],
    dout: &[f64],
    grads: &mut Gradients,
) -> (Vec<f64>, Vec<f64>) {
    let d = fuse.fan_out;
    let rows = h_ma.len() / d;
    let mut dcat = vec![0.0; rows * 2 * d];
    fuse.backward(store, &concat(h_ma, h_ia, d), dout, rows, grads, Some(&mut dcat));
    let mut da = Vec::with_capacity(rows * d);
    let mut db = Vec::with_capacity(rows * d);
    for row in dcat.chunks(2 * d) {
        da.extend_from_slice(&row[..d]);
        db.extend_from_slice(&row[d..]);
    }
    (da, db)
}
