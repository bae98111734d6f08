//! Generates a planted dataset, writes it, reads it back and scores the
//! reference predictors on it.
//!
//! `cargo run --release --example generate_dataset -- [out.jsonl] [noise] [copy_prob]`

use cross_synergy::encoder::Modality;
use cross_synergy::synthdata::{generate, read_dataset, write_dataset, LinearProbe, OracleDecoder};
use cross_synergy::trainer::TrainConfig;

fn main() -> cross_synergy::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).cloned().unwrap_or_else(|| "planted.jsonl".into());
    let noise: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let rho: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let gen = TrainConfig::desk().gen_config(400, noise, rho, 0);
    let data = generate(&gen)?;
    write_dataset(&out, &data)?;
    let back = read_dataset(&out)?;
    assert_eq!(back, data);
    println!("wrote {} dialogues, {} utterances to {out}", data.dialogues.len(), data.utterances());

    let oracle = OracleDecoder::new(&gen);
    println!("oracle, all modalities   {:.4}", oracle.accuracy(&data, &Modality::ALL));
    for m in Modality::ALL {
        println!("oracle, {:6} only       {:.4}", m.name(), oracle.accuracy(&data, &[m]));
    }
    let probe = LinearProbe::fit_dataset(&data, 300, 0.5);
    println!("linear probe             {:.4}", probe.accuracy(&data));
    Ok(())
}
