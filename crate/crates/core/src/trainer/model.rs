use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::encoder::{DialogueBatch, EncodedStates, Encoder, EncoderCache};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::objectives::{LossReport, Objectives, UnimodalHeads};
use crate::pgm::MultiTaskObjective;
use crate::spf::{ConcatClassifier, FusionCache, FusionHead, Spf};
use crate::numeric::{Gradients, ParamId, ParamStore, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// `L1`, fused cross-entropy.
    Fused,
    /// `L2`, unimodal cross-entropy.
    Unimodal,
    /// `L3`, self-distillation.
    Distill,
}

impl Task {
    pub fn slot(self) -> usize {
        match self {
            Task::Fused => 0,
            Task::Unimodal => 1,
            Task::Distill => 2,
        }
    }
}

/// Encoder, fused branch and unimodal heads trained jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct CssModel {
    pub encoder: Encoder,
    pub fusion: FusionHead,
    pub heads: UnimodalHeads,
    pub tasks: Vec<Task>,
    pub n_classes: usize,
    pub temperature: f64,
    pub teacher_grad: bool,
}

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct ModelPass {
    pub batch: DialogueBatch,
    pub states: EncodedStates,
    enc_cache: EncoderCache,
    fusion_cache: FusionCache,
    pub fused_logits: Vec<f64>,
    pub unimodal_logits: [Vec<f64>; 3],
    pub objectives: Objectives,
}

impl ModelPass {
    pub fn report(&self) -> &LossReport {
        &self.objectives.report
    }

    /// Argmax of the fused logits, lowest index on ties.
    pub fn predictions(&self, c: usize) -> Vec<usize> {
        self.fused_logits
            .chunks_exact(c)
            .map(|row| (0..c).fold(0, |best, k| if row[k] > row[best] { k } else { best }))
            .collect()
    }
}

impl CssModel {
    /// Registers every parameter into `store`. Initial values depend only on
    /// the seed and parameter names.
    pub fn build(config: &TrainConfig, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        let rng = Rng::new(config.seed).split_named("init");
        let encoder = Encoder::register(store, &rng, config.encoder())?;
        let fusion = if config.spf_on {
            FusionHead::Spf(Spf::register(store, &rng, config.spf())?)
        } else {
            FusionHead::Concat(ConcatClassifier::register(store, &rng, config.d_model, config.n_classes)?)
        };
        let heads = UnimodalHeads::register(store, &rng, config.d_model, config.n_classes)?;
        let mut tasks = vec![Task::Fused];
        if config.use_l2 {
            tasks.push(Task::Unimodal);
        }
        if config.use_l3 {
            tasks.push(Task::Distill);
        }
        Ok(Self {
            encoder,
            fusion,
            heads,
            tasks,
            n_classes: config.n_classes,
            temperature: config.temperature,
            teacher_grad: config.teacher_grad,
        })
    }

    /// Expands active-task weights to `[w1, w2, w3]`.
    pub fn full_weights(&self, weights: &[f64]) -> [f64; 3] {
        let mut w = [0.0; 3];
        for (t, &v) in self.tasks.iter().zip(weights) {
            w[t.slot()] = v;
        }
        w
    }

    /// Which active tasks reach a parameter, decided by its name.
    pub fn reaching_tasks(&self, name: &str) -> Vec<Task> {
        self.tasks
            .iter()
            .copied()
            .filter(|t| match *t {
                _ if name.starts_with("enc.") => true,
                Task::Fused => name.starts_with("spf.") || name.starts_with("cat."),
                Task::Unimodal => name.starts_with("head."),
                Task::Distill => {
                    name.starts_with("head.")
                        || (self.teacher_grad && (name.starts_with("spf.") || name.starts_with("cat.")))
                }
            })
            .collect()
    }

    pub fn shared_param_names(&self, store: &ParamStore) -> Vec<String> {
        self.shared_params(store).into_iter().map(|id| store.name(id).to_string()).collect()
    }

    pub fn run(&self, store: &ParamStore, batch: &DialogueBatch, rng: Option<&mut Rng>) -> Result<ModelPass> {
        let c = self.n_classes;
        batch.validate(self.encoder.config.d_in, self.encoder.config.n_speakers, c)?;
        let (states, enc_cache) = self.encoder.forward(store, batch, rng)?;
        let h: [&[f64]; 3] = [states.h_tilde[0].data(), states.h_tilde[1].data(), states.h_tilde[2].data()];
        let (fused_logits, fusion_cache) = self.fusion.forward(store, h)?;
        let unimodal_logits: [Vec<f64>; 3] = std::array::from_fn(|m| self.heads.forward(store, m, h[m]));
        let objectives = Objectives::evaluate(
            &fused_logits,
            [&unimodal_logits[0], &unimodal_logits[1], &unimodal_logits[2]],
            &batch.labels,
            &batch.mask,
            c,
            self.temperature,
        )?;
        Ok(ModelPass {
            batch: batch.clone(),
            states,
            enc_cache,
            fusion_cache,
            fused_logits,
            unimodal_logits,
            objectives,
        })
    }

    /// One backward pass of `w1 L1 + w2 L2 + w3 L3`.
    pub fn gradients(&self, store: &ParamStore, pass: &ModelPass, weights: [f64; 3]) -> Gradients {
        let mut grads = Gradients::zeros_like(store);
        let lg = pass.objectives.logit_grads(weights, self.teacher_grad);
        let st = &pass.states;
        let h: [&[f64]; 3] = [st.h_tilde[0].data(), st.h_tilde[1].data(), st.h_tilde[2].data()];
        let mut dh: [Vec<f64>; 3] = std::array::from_fn(|m| vec![0.0; h[m].len()]);
        if lg.fused.iter().any(|&v| v != 0.0) {
            dh = self.fusion.backward(store, h, &pass.fusion_cache, &lg.fused, &mut grads);
        }
        for m in 0..3 {
            if lg.unimodal[m].iter().any(|&v| v != 0.0) {
                let d = self.heads.backward(store, m, h[m], &lg.unimodal[m], &mut grads);
                for (a, b) in dh[m].iter_mut().zip(&d) {
                    *a += b;
                }
            }
        }
        self.encoder.backward(store, &pass.batch, st, &pass.enc_cache, &dh, &mut grads);
        grads
    }

    /// Loss report and confusion counts without dropout.
    pub fn evaluate_batch(&self, store: &ParamStore, batch: &DialogueBatch) -> Result<(LossReport, ConfusionMatrix)> {
        let pass = self.run(store, batch, None)?;
        let mut cm = ConfusionMatrix::new(self.n_classes);
        cm.accumulate(&pass.predictions(self.n_classes), &batch.labels, &batch.mask)?;
        Ok((*pass.report(), cm))
    }
}

impl MultiTaskObjective for CssModel {
    type Input = DialogueBatch;
    type Pass = ModelPass;

    fn tasks(&self) -> usize {
        self.tasks.len()
    }

    fn forward(&self, store: &ParamStore, input: &DialogueBatch, rng: Option<&mut Rng>) -> Result<ModelPass> {
        self.run(store, input, rng)
    }

    fn task_losses(&self, pass: &ModelPass) -> Vec<f64> {
        let all = pass.report().as_array();
        self.tasks.iter().map(|t| all[t.slot()]).collect()
    }

    fn weighted_gradients(&self, store: &ParamStore, pass: &ModelPass, weights: &[f64]) -> Gradients {
        self.gradients(store, pass, self.full_weights(weights))
    }

    fn shared_params(&self, store: &ParamStore) -> Vec<ParamId> {
        store
            .ids()
            .filter(|&id| self.reaching_tasks(store.name(id)).len() >= 2)
            .collect()
    }
}

/// Checks that a batch is usable before training starts.
pub(crate) fn ensure_nonempty(batch: &DialogueBatch) -> Result<()> {
    if batch.valid_count() == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}
