use std::time::Instant;

use super::config::TrainConfig;
use super::model::{ensure_nonempty, CssModel};
use super::report::{EpochRow, EvalRow, RunReport, StepLog};
use crate::encoder::Modality;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, Summary};
use crate::numeric::{Adam, ParamStore, Rng};
use crate::objectives::LossReport;
use crate::pgm::{pgm_step, WeightMode};
use crate::synthdata::{read_dataset, Dataset};

/// A finished run: the report, trained parameters and per-epoch wall-clock.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub model: CssModel,
    pub store: ParamStore,
    pub epoch_seconds: Vec<f64>,
}

/// Checks that a dataset fits the model's input layout.
pub fn check_compatible(config: &TrainConfig, data: &Dataset) -> Result<()> {
    let g = &data.config;
    if g.d_in != config.d_in() || g.n_classes != config.n_classes {
        return Err(Error::Config(format!(
            "dataset has widths {:?} and {} classes; model expects {:?} and {}",
            g.d_in,
            g.n_classes,
            config.d_in(),
            config.n_classes
        )));
    }
    if g.n_speakers > config.n_speakers || g.max_len > config.max_len {
        return Err(Error::Config(format!(
            "dataset needs {} speakers and length {}; model allows {} and {}",
            g.n_speakers, g.max_len, config.n_speakers, config.max_len
        )));
    }
    if data.dialogues.is_empty() {
        return Err(Error::Config("dataset has no dialogues".into()));
    }
    Ok(())
}

/// Reads the training file (or `data` when given) and the evaluation split.
pub fn load_datasets(config: &TrainConfig, data: Option<&str>) -> Result<(Dataset, Dataset)> {
    let path = data
        .map(str::to_string)
        .or_else(|| config.train_data.clone())
        .ok_or_else(|| Error::Config("no training data given".into()))?;
    let full = read_dataset(&path)?;
    check_compatible(config, &full)?;
    let (train, eval) = match &config.eval_data {
        Some(p) => (full, read_dataset(p)?),
        None => full.split(config.eval_fraction)?,
    };
    check_compatible(config, &eval)?;
    if train.dialogues.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    Ok((train, eval))
}

/// Weighted mean of per-batch reports, weights being valid-row counts.
#[derive(Default)]
struct LossMean {
    sum: LossReport,
    weight: f64,
}

impl LossMean {
    fn add(&mut self, r: &LossReport, w: f64) {
        let s = &mut self.sum;
        s.l1 += w * r.l1;
        s.l2 += w * r.l2;
        s.l3 += w * r.l3;
        for m in 0..3 {
            s.l2_per[m] += w * r.l2_per[m];
            s.l3_per[m] += w * r.l3_per[m];
        }
        self.weight += w;
    }

    fn mean(&self) -> LossReport {
        let w = self.weight.max(f64::MIN_POSITIVE);
        let s = &self.sum;
        LossReport {
            l1: s.l1 / w,
            l2: s.l2 / w,
            l3: s.l3 / w,
            l2_per: s.l2_per.map(|v| v / w),
            l3_per: s.l3_per.map(|v| v / w),
        }
    }
}

fn uniform_composite(model: &CssModel, r: &LossReport) -> f64 {
    let all = r.as_array();
    model.tasks.iter().map(|t| all[t.slot()]).sum::<f64>() / model.tasks.len() as f64
}

/// Evaluates on `data` in file order, zeroing the modalities not in `kept`.
pub fn evaluate(
    model: &CssModel,
    store: &ParamStore,
    data: &Dataset,
    config: &TrainConfig,
    kept: &[Modality],
) -> Result<EvalRow> {
    if kept.is_empty() {
        return Err(Error::InvalidArgument("at least one modality must be kept".into()));
    }
    let order: Vec<usize> = (0..data.dialogues.len()).collect();
    let mut losses = LossMean::default();
    let mut cm = ConfusionMatrix::new(config.n_classes);
    for batch in data.batches(&order, config.batch_size, config.max_len)? {
        let batch = if kept.len() == 3 { batch } else { batch.with_modalities_zeroed(kept) };
        let (r, part) = model.evaluate_batch(store, &batch)?;
        losses.add(&r, batch.valid_count() as f64);
        cm.merge(&part)?;
    }
    let mean = losses.mean();
    Ok(EvalRow {
        uniform_composite: uniform_composite(model, &mean),
        losses: mean,
        metrics: cm.summarize()?,
    })
}

/// Metrics with the withheld modalities replaced by zero features.
pub fn modality_dropout_eval(
    model: &CssModel,
    store: &ParamStore,
    data: &Dataset,
    config: &TrainConfig,
    kept: &[Modality],
) -> Result<Summary> {
    Ok(evaluate(model, store, data, config, kept)?.metrics)
}

fn weight_mode(config: &TrainConfig, k: usize) -> WeightMode {
    let uniform = vec![1.0 / k as f64; k];
    match (config.pgm_on, config.pgm_pin_uniform) {
        (true, false) => WeightMode::Pareto,
        (true, true) => WeightMode::Pinned(uniform),
        (false, _) => WeightMode::Static(uniform),
    }
}

/// Trains from scratch. Deterministic given the config and data.
pub fn train(config: &TrainConfig, train_set: &Dataset, eval_set: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    check_compatible(config, train_set)?;
    check_compatible(config, eval_set)?;
    let mut store = ParamStore::new();
    let model = CssModel::build(config, &mut store)?;
    let mut adam = Adam::new(config.adam())?;
    let root = Rng::new(config.seed);
    let mode = weight_mode(config, model.tasks.len());

    let initial = evaluate(&model, &store, eval_set, config, &Modality::ALL)?;
    let mut best = (0, initial.metrics.clone());
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut steps = Vec::new();
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    let mut step: u64 = 0;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.dialogues.len()).collect();
        root.split_named("shuffle").split(epoch as u64).shuffle(&mut order);
        let mut losses = LossMean::default();
        let (mut composite, mut uniform, mut gamma_sum, mut fallbacks, mut n_steps) =
            (0.0, 0.0, [0.0; 3], 0, 0usize);
        for batch in train_set.batches(&order, config.batch_size, config.max_len)? {
            ensure_nonempty(&batch)?;
            let mut drop_rng = root.split_named("dropout").split(step);
            let (rec, pass) = pgm_step(&model, &mut store, &batch, &mut adam, Some(&mut drop_rng), &mode, step)?;
            let full = model.full_weights(&rec.gamma);
            let report = *pass.report();
            losses.add(&report, 1.0);
            composite += full.iter().zip(report.as_array()).map(|(g, l)| g * l).sum::<f64>();
            uniform += uniform_composite(&model, &report);
            for m in 0..3 {
                gamma_sum[m] += full[m];
            }
            fallbacks += usize::from(rec.fallback);
            n_steps += 1;
            if config.pgm_on {
                steps.push(StepLog {
                    step,
                    epoch,
                    gamma: full,
                    direction_norm: rec.direction_norm.unwrap_or(0.0),
                    fallback: rec.fallback,
                    losses: report.as_array(),
                    pareto_slack: rec.pareto_slack,
                });
            }
            step += 1;
        }
        let n = n_steps.max(1) as f64;
        let eval = evaluate(&model, &store, eval_set, config, &Modality::ALL)?;
        if eval.metrics.accuracy > best.1.accuracy {
            best = (epoch, eval.metrics.clone());
        }
        epochs.push(EpochRow {
            epoch,
            train: losses.mean(),
            train_composite: composite / n,
            train_uniform_composite: uniform / n,
            gamma_mean: config.pgm_on.then(|| gamma_sum.map(|g| g / n)),
            fallback_steps: fallbacks,
            eval,
        });
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    let final_metrics = epochs.last().map_or_else(|| initial.metrics.clone(), |e| e.eval.metrics.clone());
    let report = RunReport {
        config: config.clone(),
        shared_params: model.shared_param_names(&store),
        initial,
        epochs,
        steps,
        final_metrics,
        best_epoch: best.0,
        best_metrics: best.1,
    };
    Ok(TrainOutcome {
        report,
        model,
        store,
        epoch_seconds,
    })
}
