//! Finite-difference checks of every backward pass.
//!
//! `cargo run --release --example gradcheck -- [module] [trials]`

use cross_synergy::gradcheck::{run_module, GradModule, DEFAULT_TRIALS};

fn main() -> cross_synergy::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let modules = match args.first() {
        Some(m) => vec![GradModule::parse(m)?],
        None => GradModule::ALL.to_vec(),
    };
    let trials = args.get(1).and_then(|t| t.parse().ok()).unwrap_or(DEFAULT_TRIALS);
    for m in modules {
        println!("{}", run_module(m, trials, 0)?);
    }
    Ok(())
}
