use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::metrics::Summary;
use crate::objectives::LossReport;

/// Losses and metrics on the evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub losses: LossReport,
    /// Mean of the active losses.
    pub uniform_composite: f64,
    pub metrics: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean over the epoch's steps.
    pub train: LossReport,
    /// Mean of the weighted loss actually minimized.
    pub train_composite: f64,
    /// Mean of the active losses, comparable across weighting schemes.
    pub train_uniform_composite: f64,
    /// Mean task weights `[w1, w2, w3]`; absent without gradient modulation.
    pub gamma_mean: Option<[f64; 3]>,
    pub fallback_steps: usize,
    pub eval: EvalRow,
}

/// One modulated step. Weights of dropped tasks are reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub gamma: [f64; 3],
    pub direction_norm: f64,
    pub fallback: bool,
    pub losses: [f64; 3],
    pub pareto_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    /// Parameters reached by at least two active losses.
    pub shared_params: Vec<String>,
    pub initial: EvalRow,
    pub epochs: Vec<EpochRow>,
    pub steps: Vec<StepLog>,
    pub final_metrics: Summary,
    /// 0 stands for the initial evaluation.
    pub best_epoch: usize,
    pub best_metrics: Summary,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_l1,train_l2_text,train_l2_audio,train_l2_visual,train_l3_text,train_l3_audio,train_l3_visual,\
train_composite,train_uniform_composite,eval_l1,eval_l2,eval_l3,eval_uniform_composite,eval_acc,eval_wf1\n",
        );
        let eval_cols = |e: &EvalRow| {
            format!(
                "{},{},{},{},{},{}",
                e.losses.l1, e.losses.l2, e.losses.l3, e.uniform_composite, e.metrics.accuracy, e.metrics.weighted_f1
            )
        };
        let _ = writeln!(out, "0,,,,,,,,,,{}", eval_cols(&self.initial));
        for r in &self.epochs {
            let t = &r.train;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                t.l1,
                t.l2_per[0],
                t.l2_per[1],
                t.l2_per[2],
                t.l3_per[0],
                t.l3_per[1],
                t.l3_per[2],
                r.train_composite,
                r.train_uniform_composite,
                eval_cols(&r.eval)
            );
        }
        out
    }

    pub fn gamma_csv(&self) -> String {
        let mut out = String::from("step,gamma1,gamma2,gamma3,direction_norm,fallback,l1,l2,l3\n");
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.step,
                s.gamma[0],
                s.gamma[1],
                s.gamma[2],
                s.direction_norm,
                u8::from(s.fallback),
                s.losses[0],
                s.losses[1],
                s.losses[2]
            );
        }
        out
    }

    /// Table-style row: accuracy and weighted F1 of the final and best epochs.
    pub fn summary_line(&self, label: &str) -> String {
        format!(
            "{label}\tacc={:.4}\twf1={:.4}\tbest_epoch={}\tbest_acc={:.4}\tbest_wf1={:.4}",
            self.final_metrics.accuracy,
            self.final_metrics.weighted_f1,
            self.best_epoch,
            self.best_metrics.accuracy,
            self.best_metrics.weighted_f1
        )
    }
}
