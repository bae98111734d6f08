//! Trains once, then evaluates with every subset of modalities zeroed out,
//! next to the planted-rule oracle restricted to the same subset.
//!
//! `cargo run --release --example modality_dropout -- [epochs]`

use cross_synergy::encoder::Modality::{self, Audio, Text, Visual};
use cross_synergy::synthdata::{generate, OracleDecoder};
use cross_synergy::trainer::{modality_dropout_eval, train, TrainConfig};

fn main() -> cross_synergy::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let config = TrainConfig { epochs, ..TrainConfig::desk() };
    let gen = config.gen_config(2500, 0.1, 0.0, 0);
    let (train_set, test_set) = generate(&gen)?.split(0.2)?;
    let out = train(&config, &train_set, &test_set)?;
    let oracle = OracleDecoder::new(&gen);

    let subsets: [&[Modality]; 7] =
        [&[Text], &[Audio], &[Visual], &[Text, Audio], &[Text, Visual], &[Audio, Visual], &[Text, Audio, Visual]];
    println!("{:8} {:>7} {:>7} {:>7}", "kept", "ACC", "w-F1", "oracle");
    for kept in subsets {
        let m = modality_dropout_eval(&out.model, &out.store, &test_set, &config, kept)?;
        let label: String = kept.iter().map(|m| m.short()).collect();
        println!(
            "{label:8} {:7.2} {:7.2} {:7.2}",
            100.0 * m.accuracy,
            100.0 * m.weighted_f1,
            100.0 * oracle.accuracy(&test_set, kept)
        );
    }
    Ok(())
}
