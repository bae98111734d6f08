//! Randomized finite-difference suites for every hand-derived backward pass.
//!
//! Each trial builds a tiny instance from its own seed, perturbs every
//! parameter away from its structured initial value, and compares the
//! analytic gradient of a random linear functional (or of the losses) with
//! central differences. Inputs are registered as parameters so that input
//! gradients are checked as well.

use std::fmt;
use std::time::Instant;

use crate::encoder::{DialogueBatch, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::numeric::{check_gradients, Gradients, ParamId, ParamStore, Rng, Tensor};
use crate::objectives::{Objectives, UnimodalHeads};
use crate::spf::{ConcatClassifier, FusionCache, Spf, SpfConfig};
use crate::trainer::{CssModel, TrainConfig};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const DEFAULT_TRIALS: usize = 50;
/// Smallest `|z|` allowed where the signed square root is differentiated.
pub const MIN_SQRT_ARG: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradModule {
    Encoder,
    Spf,
    Concat,
    Heads,
    Losses,
    Model,
}

impl GradModule {
    pub const ALL: [GradModule; 6] = [
        GradModule::Encoder,
        GradModule::Spf,
        GradModule::Concat,
        GradModule::Heads,
        GradModule::Losses,
        GradModule::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradModule::Encoder => "encoder",
            GradModule::Spf => "spf",
            GradModule::Concat => "concat",
            GradModule::Heads => "heads",
            GradModule::Losses => "losses",
            GradModule::Model => "model",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gradcheck module {name:?}")))
    }
}

impl fmt::Display for GradModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Worst case over all trials of one module.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub module: GradModule,
    pub trials: usize,
    pub worst: f64,
    pub worst_param: String,
    pub worst_trial: usize,
    pub scalars_checked: usize,
    pub seconds: f64,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.worst < TOLERANCE
    }
}

impl fmt::Display for GradCheckSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:8} {} trials={} scalars={} worst_rel_err={:.3e} at {} (trial {}) {:.2}s",
            self.module.name(),
            if self.passed() { "PASS" } else { "FAIL" },
            self.trials,
            self.scalars_checked,
            self.worst,
            self.worst_param,
            self.worst_trial,
            self.seconds
        )
    }
}

/// Runs `trials` randomized checks of `module`; trial `t` uses seed `seed + t`.
pub fn run_module(module: GradModule, trials: usize, seed: u64) -> Result<GradCheckSummary> {
    let start = Instant::now();
    let mut summary = GradCheckSummary {
        module,
        trials,
        worst: 0.0,
        worst_param: String::new(),
        worst_trial: 0,
        scalars_checked: 0,
        seconds: 0.0,
    };
    for t in 0..trials {
        let mut rng = Rng::new(seed.wrapping_add(t as u64)).split_named(module.name());
        let report = match module {
            GradModule::Encoder => encoder_trial(&mut rng, t)?,
            GradModule::Spf => spf_trial(&mut rng, t)?,
            GradModule::Concat => concat_trial(&mut rng)?,
            GradModule::Heads => heads_trial(&mut rng)?,
            GradModule::Losses => losses_trial(&mut rng)?,
            GradModule::Model => model_trial(&mut rng, t)?,
        };
        summary.scalars_checked += report.scalars_checked;
        if report.worst > summary.worst || summary.worst_param.is_empty() {
            summary.worst = report.worst;
            summary.worst_param = report.worst_param;
            summary.worst_trial = t;
        }
    }
    summary.seconds = start.elapsed().as_secs_f64();
    Ok(summary)
}

pub fn run_all(trials: usize, seed: u64) -> Result<Vec<GradCheckSummary>> {
    GradModule::ALL.into_iter().map(|m| run_module(m, trials, seed)).collect()
}

fn random_values(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

/// Moves every parameter off its initial value so that identity gains, zero
/// biases and unit constants do not hide errors.
fn perturb(store: &mut ParamStore, rng: &mut Rng, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.value_mut(id).data_mut() {
            *v += scale * rng.normal();
        }
    }
}

fn add_input(store: &mut ParamStore, rng: &mut Rng, name: &str, rows: usize, width: usize) -> Result<ParamId> {
    store.add(name, Tensor::new(vec![rows, width], random_values(rng, rows * width, 1.0))?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_batch(rng: &mut Rng, batch: usize, len: usize, d_in: [usize; 3], speakers: usize, c: usize) -> DialogueBatch {
    let rows = batch * len;
    let mut out = DialogueBatch {
        batch_size: batch,
        max_len: len,
        features: d_in.map(|d| Tensor::zeros(&[batch, len, d])),
        speakers: vec![0; rows],
        mask: vec![false; rows],
        labels: vec![-1; rows],
    };
    for b in 0..batch {
        let n = 1 + rng.below(len);
        for t in 0..n {
            let r = b * len + t;
            out.mask[r] = true;
            out.labels[r] = rng.below(c) as i64;
            out.speakers[r] = rng.below(speakers);
            for f in out.features.iter_mut() {
                for v in f.row_mut(r) {
                    *v = rng.normal();
                }
            }
        }
    }
    out
}

fn encoder_trial(rng: &mut Rng, trial: usize) -> Result<crate::numeric::GradCheckReport> {
    let config = EncoderConfig {
        d_in: [3, 2, 2],
        d_model: 4,
        heads: 2,
        d_ff: 6,
        n_speakers: 2,
        mae_on: trial % 4 != 1,
        iae_on: trial % 4 != 2,
        dropout: 0.0,
    };
    let mut store = ParamStore::new();
    let enc = Encoder::register(&mut store, &rng.split_named("init"), config.clone())?;
    perturb(&mut store, rng, 0.3);
    let batch = random_batch(rng, 2, 3, config.d_in, 2, 3);
    let rows = batch.rows();
    let probes: [Vec<f64>; 3] = std::array::from_fn(|_| random_values(rng, rows * 4, 1.0));
    let f = |s: &ParamStore| -> f64 {
        let (st, _) = enc.forward(s, &batch, None).expect("forward succeeded once");
        (0..3).map(|m| dot(st.h_tilde[m].data(), &probes[m])).sum()
    };
    let (states, cache) = enc.forward(&store, &batch, None)?;
    let mut grads = Gradients::zeros_like(&store);
    enc.backward(&store, &batch, &states, &cache, &probes, &mut grads);
    check_gradients(f, &store, &grads, STEP)
}

fn spf_trial(rng: &mut Rng, trial: usize) -> Result<crate::numeric::GradCheckReport> {
    let (d, n, c) = (4, 3, 3);
    let config = SpfConfig {
        d_model: d,
        order: 2 + trial % 3,
        rank: 3,
        n_classes: c,
        msp_on: trial.is_multiple_of(2),
    };
    // Resample until every product stays away from the kink of the signed root.
    for _ in 0..200 {
        let mut store = ParamStore::new();
        let spf = Spf::register(&mut store, &rng.split_named("init"), config)?;
        perturb(&mut store, rng, 0.3);
        let inputs = [
            add_input(&mut store, rng, "input.text", n, d)?,
            add_input(&mut store, rng, "input.audio", n, d)?,
            add_input(&mut store, rng, "input.visual", n, d)?,
        ];
        let h = |s: &ParamStore| inputs.map(|id| s.value(id).data().to_vec());
        let h0 = h(&store);
        let state = spf.forward(&store, [&h0[0], &h0[1], &h0[2]])?;
        if state.z.iter().any(|z| z.abs() < MIN_SQRT_ARG) {
            continue;
        }
        let probe = random_values(rng, n * c, 1.0);
        let f = |s: &ParamStore| -> f64 {
            let x = h(s);
            dot(&spf.forward(s, [&x[0], &x[1], &x[2]]).expect("forward").logits, &probe)
        };
        let mut grads = Gradients::zeros_like(&store);
        let dh = spf.backward(&store, [&h0[0], &h0[1], &h0[2]], &state, &probe, &mut grads);
        for (id, g) in inputs.iter().zip(&dh) {
            grads.slot(*id).copy_from_slice(g);
        }
        return check_gradients(f, &store, &grads, STEP);
    }
    Err(Error::InvalidArgument("could not draw a fusion case away from z = 0".into()))
}

fn concat_trial(rng: &mut Rng) -> Result<crate::numeric::GradCheckReport> {
    let (d, n, c) = (4, 3, 3);
    let mut store = ParamStore::new();
    let cat = ConcatClassifier::register(&mut store, &rng.split_named("init"), d, c)?;
    perturb(&mut store, rng, 0.3);
    let inputs = [
        add_input(&mut store, rng, "input.text", n, d)?,
        add_input(&mut store, rng, "input.audio", n, d)?,
        add_input(&mut store, rng, "input.visual", n, d)?,
    ];
    let h = |s: &ParamStore| inputs.map(|id| s.value(id).data().to_vec());
    let probe = random_values(rng, n * c, 1.0);
    let f = |s: &ParamStore| {
        let x = h(s);
        dot(&cat.forward(s, [&x[0], &x[1], &x[2]]).expect("forward"), &probe)
    };
    let h0 = h(&store);
    let mut grads = Gradients::zeros_like(&store);
    let dh = cat.backward(&store, [&h0[0], &h0[1], &h0[2]], &probe, &mut grads);
    for (id, g) in inputs.iter().zip(&dh) {
        grads.slot(*id).copy_from_slice(g);
    }
    check_gradients(f, &store, &grads, STEP)
}

fn heads_trial(rng: &mut Rng) -> Result<crate::numeric::GradCheckReport> {
    let (d, n, c) = (4, 3, 3);
    let mut store = ParamStore::new();
    let heads = UnimodalHeads::register(&mut store, &rng.split_named("init"), d, c)?;
    perturb(&mut store, rng, 0.3);
    let inputs = [
        add_input(&mut store, rng, "input.text", n, d)?,
        add_input(&mut store, rng, "input.audio", n, d)?,
        add_input(&mut store, rng, "input.visual", n, d)?,
    ];
    let probes: [Vec<f64>; 3] = std::array::from_fn(|_| random_values(rng, n * c, 1.0));
    let f = |s: &ParamStore| -> f64 {
        (0..3)
            .map(|m| dot(&heads.forward(s, m, s.value(inputs[m]).data()), &probes[m]))
            .sum()
    };
    let mut grads = Gradients::zeros_like(&store);
    for m in 0..3 {
        let x = store.value(inputs[m]).data().to_vec();
        let dh = heads.backward(&store, m, &x, &probes[m], &mut grads);
        grads.slot(inputs[m]).copy_from_slice(&dh);
    }
    check_gradients(f, &store, &grads, STEP)
}

fn losses_trial(rng: &mut Rng) -> Result<crate::numeric::GradCheckReport> {
    let (n, c) = (5, 4);
    let mut store = ParamStore::new();
    let fused = add_input(&mut store, rng, "logits.fused", n, c)?;
    let uni = [
        add_input(&mut store, rng, "logits.text", n, c)?,
        add_input(&mut store, rng, "logits.audio", n, c)?,
        add_input(&mut store, rng, "logits.visual", n, c)?,
    ];
    let mut mask: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.7)).collect();
    mask[0] = true;
    let labels: Vec<i64> = mask.iter().map(|&m| if m { rng.below(c) as i64 } else { -1 }).collect();
    let temperature = rng.uniform_range(0.5, 4.0);
    let weights = [rng.uniform(), rng.uniform(), rng.uniform()];
    let eval = |s: &ParamStore| {
        Objectives::evaluate(
            s.value(fused).data(),
            uni.map(|id| s.value(id).data()),
            &labels,
            &mask,
            c,
            temperature,
        )
    };
    let f = |s: &ParamStore| dot(&eval(s).expect("losses").report.as_array(), &weights);
    let lg = eval(&store)?.logit_grads(weights, true);
    let mut grads = Gradients::zeros_like(&store);
    grads.slot(fused).copy_from_slice(&lg.fused);
    for m in 0..3 {
        grads.slot(uni[m]).copy_from_slice(&lg.unimodal[m]);
    }
    check_gradients(f, &store, &grads, STEP)
}

/// End to end through encoder, fusion, heads and all three losses. Odd
/// trials stop the distillation gradient at the teacher and give it no
/// weight, which must leave the gradient exact.
fn model_trial(rng: &mut Rng, trial: usize) -> Result<crate::numeric::GradCheckReport> {
    let teacher_grad = trial.is_multiple_of(2);
    let config = TrainConfig {
        d_model: 4,
        heads: 2,
        d_ff: 6,
        order: 2 + trial % 2,
        rank: 3,
        n_classes: 3,
        d_text: 3,
        d_audio: 2,
        d_visual: 2,
        n_speakers: 2,
        max_len: 3,
        dropout: 0.0,
        temperature: rng.uniform_range(0.5, 3.0),
        spf_on: trial % 5 != 4,
        msp_on: trial % 3 != 2,
        teacher_grad,
        seed: trial as u64,
        ..TrainConfig::desk()
    };
    for _ in 0..200 {
        let mut store = ParamStore::new();
        let model = CssModel::build(&config, &mut store)?;
        perturb(&mut store, rng, 0.3);
        let batch = random_batch(rng, 2, 3, config.d_in(), 2, 3);
        let pass = model.run(&store, &batch, None)?;
        let h = &pass.states.h_tilde;
        if let (_, FusionCache::Spf(st)) = model.fusion.forward(&store, [h[0].data(), h[1].data(), h[2].data()])? {
            let d_small = st.z.chunks(config.rank).zip(&batch.mask).any(|(z, &m)| m && z.iter().any(|v| v.abs() < MIN_SQRT_ARG));
            if d_small {
                continue;
            }
        }
        let weights = [rng.uniform(), rng.uniform(), if teacher_grad { rng.uniform() } else { 0.0 }];
        let f = |s: &ParamStore| dot(&model.run(s, &batch, None).expect("forward").report().as_array(), &weights);
        let grads = model.gradients(&store, &pass, weights);
        return check_gradients(f, &store, &grads, STEP);
    }
    Err(Error::InvalidArgument("could not draw a model case away from z = 0".into()))
}
