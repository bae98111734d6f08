//! Trains the desk profile on the planted XOR task and compares it with the
//! concatenation baseline.
//!
//! `cargo run --release --example train_planted -- [seed] [epochs]`

use cross_synergy::encoder::Modality;
use cross_synergy::synthdata::{generate, OracleDecoder};
use cross_synergy::trainer::{train, TrainConfig, Variant};

fn main() -> cross_synergy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut config = TrainConfig { seed, ..TrainConfig::desk() };
    if let Some(e) = args.get(2).and_then(|s| s.parse().ok()) {
        config.epochs = e;
    }
    let gen = config.gen_config(2500, 0.1, 0.0, seed);
    let (train_set, test_set) = generate(&gen)?.split(0.2)?;
    let oracle = OracleDecoder::new(&gen).accuracy(&test_set, &Modality::ALL);
    println!("oracle accuracy {oracle:.4}");

    for (label, cfg) in [("full", config.clone()), ("w/o SPF", Variant::NoSpf.apply(&config))] {
        let out = train(&cfg, &train_set, &test_set)?;
        for (row, secs) in out.report.epochs.iter().zip(&out.epoch_seconds) {
            println!(
                "{label:8} epoch {:3} loss {:.4} acc {:.4} ({secs:.1}s)",
                row.epoch, row.train_composite, row.eval.metrics.accuracy
            );
        }
        println!("{}", out.report.summary_line(label));
    }
    Ok(())
}
