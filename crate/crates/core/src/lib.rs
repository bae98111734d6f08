//! Cross-space synergy: a two-stage multimodal dialogue encoder, polynomial
//! fusion, and Pareto-weighted multi-task training, with hand-written
//! backward passes throughout.

pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod numeric;
pub mod objectives;
pub mod pgm;
pub mod spf;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
