//! Configuration, the joint model, the training loop, ablations and
//! checkpoints.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod report;
pub mod train;

pub use ablate::{ablate, Variant};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TrainConfig;
pub use model::{CssModel, ModelPass, Task};
pub use report::{EpochRow, EvalRow, RunReport, StepLog};
pub use train::{evaluate, load_datasets, modality_dropout_eval, train, TrainOutcome};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `report.json`, `curves.csv`, `gamma.csv`, `timing.csv` and
/// `model.ckpt` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, outcome: &TrainOutcome) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    put("report.json", outcome.report.to_json())?;
    put("curves.csv", outcome.report.curves_csv())?;
    put("gamma.csv", outcome.report.gamma_csv())?;
    let mut timing = String::from("epoch,seconds\n");
    for (i, s) in outcome.epoch_seconds.iter().enumerate() {
        let _ = writeln!(timing, "{},{s:.3}", i + 1);
    }
    put("timing.csv", timing)?;
    save_checkpoint(dir.join("model.ckpt"), &outcome.report.config, &outcome.store)
}
