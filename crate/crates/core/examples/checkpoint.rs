//! Saves a trained model, loads it back and checks that evaluation agrees.
//!
//! `cargo run --release --example checkpoint -- [path]`

use cross_synergy::encoder::Modality;
use cross_synergy::synthdata::generate;
use cross_synergy::trainer::{evaluate, load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "model.ckpt".into());
    let config = TrainConfig { epochs: 2, ..TrainConfig::desk() };
    let (train_set, test_set) = generate(&config.gen_config(300, 0.1, 0.0, 0))?.split(0.2)?;
    let out = train(&config, &train_set, &test_set)?;
    save_checkpoint(&path, &config, &out.store)?;
    println!("saved {} tensors to {path} ({} bytes)", out.store.len(), std::fs::metadata(&path)?.len());

    let (cfg, model, store) = load_checkpoint(&path)?;
    let before = evaluate(&out.model, &out.store, &test_set, &config, &Modality::ALL)?;
    let after = evaluate(&model, &store, &test_set, &cfg, &Modality::ALL)?;
    assert_eq!(before, after);
    println!("reloaded model: acc {:.4}, w-F1 {:.4}, identical to the original", after.metrics.accuracy, after.metrics.weighted_f1);
    Ok(())
}
