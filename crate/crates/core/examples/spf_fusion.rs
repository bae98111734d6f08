//! Runs the polynomial fusion head on random modality vectors and shows how
//! its output responds to flipping the sign of one modality.
//!
//! `cargo run --release --example spf_fusion`

use cross_synergy::numeric::{ParamStore, Rng};
use cross_synergy::spf::{Spf, SpfConfig};

fn main() -> cross_synergy::Result<()> {
    let config = SpfConfig { d_model: 8, order: 3, rank: 4, n_classes: 4, msp_on: true };
    let mut store = ParamStore::new();
    let rng = Rng::new(7);
    let spf = Spf::register(&mut store, &rng, config)?;
    println!("{} parameters in {} tensors", store.num_scalars(), store.len());
    for j in 0..config.order {
        let gates: Vec<String> = (0..3).map(|m| format!("{:.3}", spf.lambda(&store, j, m))).collect();
        println!("order {} gates [{}]", j + 1, gates.join(", "));
    }

    let mut draw = rng.split_named("inputs");
    let mut h: Vec<Vec<f64>> = (0..3).map(|_| (0..8).map(|_| draw.normal()).collect()).collect();
    let base = spf.forward(&store, [&h[0], &h[1], &h[2]])?;
    println!("probs            {:.4?}", base.probs);
    for m in 0..3 {
        h[m].iter_mut().for_each(|v| *v = -*v);
        let flipped = spf.forward(&store, [&h[0], &h[1], &h[2]])?;
        h[m].iter_mut().for_each(|v| *v = -*v);
        println!("flip modality {m}  {:.4?}", flipped.probs);
    }
    Ok(())
}
