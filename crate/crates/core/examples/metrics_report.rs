//! Accuracy, per-class recall and weighted F1 from a confusion matrix.
//!
//! `cargo run --release --example metrics_report`

use cross_synergy::metrics::{ConfusionMatrix, Summary};

fn main() -> cross_synergy::Result<()> {
    let labels = [0, 0, 1, 1, 1, 2, 2, -1];
    let preds = [0, 1, 1, 1, 0, 2, 1, 0];
    let mask = labels.map(|l| l >= 0);
    let mut cm = ConfusionMatrix::new(3);
    cm.accumulate(&preds, &labels, &mask)?;
    for t in 0..3 {
        let row: Vec<u64> = (0..3).map(|p| cm.get(t, p)).collect();
        println!("true {t}: {row:?}");
    }
    let s = cm.summarize()?;
    print!("{}", s.to_key_values());
    println!("{}\n{}", Summary::csv_header(3), s.csv_row());
    Ok(())
}
