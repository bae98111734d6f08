//! Trains every single-component ablation next to the full model.
//!
//! `cargo run --release --example ablation_table -- [epochs] [seed]`

use cross_synergy::synthdata::generate;
use cross_synergy::trainer::{train, TrainConfig, Variant};

fn main() -> cross_synergy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = TrainConfig { epochs, seed, ..TrainConfig::desk() };
    let (train_set, test_set) = generate(&config.gen_config(2500, 0.1, 0.0, seed))?.split(0.2)?;

    println!("{:10} {:>7} {:>7}", "variant", "ACC", "w-F1");
    let rows = std::iter::once(("full".to_string(), config.clone()))
        .chain(Variant::ALL.iter().map(|v| (v.to_string(), v.apply(&config))));
    for (label, cfg) in rows {
        let m = train(&cfg, &train_set, &test_set)?.report.final_metrics;
        println!("{label:10} {:7.2} {:7.2}", 100.0 * m.accuracy, 100.0 * m.weighted_f1);
    }
    Ok(())
}
