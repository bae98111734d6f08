//! Dense numerics shared by every layer: tensors, the parameter registry,
//! activations, Adam, seeded randomness and the finite-difference oracle.

pub mod adam;
pub mod finite_diff;
pub mod linalg;
pub mod ops;
pub mod params;
pub mod rng;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamConfig};
pub use finite_diff::{check_gradients, finite_diff_grad, relative_error, GradCheckReport};
pub use ops::{gelu, gelu_grad, sigmoid, softmax, softmax_with_temperature};
pub use params::{Gradients, ParamEntry, ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::Tensor;

/// Glorot-uniform initializer for a `fan_out x fan_in` weight.
pub fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("initializer shape is consistent")
}
