use cross_synergy::encoder::Modality;
use cross_synergy::synthdata::{generate, Dataset};
use cross_synergy::trainer::{
    ablate, evaluate, modality_dropout_eval, train, CssModel, TrainConfig, Variant,
};
use cross_synergy::numeric::ParamStore;

const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Visual];

fn data(config: &TrainConfig, n: usize, noise: f64, seed: u64) -> (Dataset, Dataset) {
    generate(&config.gen_config(n, noise, 0.0, seed)).unwrap().split(0.2).unwrap()
}

fn small(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, ..TrainConfig::desk() }
}

#[test]
fn plain_fused_loss_fits_noiseless_data() {
    let config = TrainConfig {
        pgm_on: false,
        use_l2: false,
        use_l3: false,
        ..small(30)
    };
    let (train_set, eval_set) = data(&config, 400, 0.0, 0);
    let out = train(&config, &train_set, &eval_set).unwrap();
    let last = out.report.epochs.last().unwrap();
    assert!(last.train.l1 < 0.05, "final train L1 {}", last.train.l1);
    // Disabled losses are still measured but carry no weight.
    assert!((last.train_composite - last.train.l1).abs() < 1e-12);
    assert!(out.report.shared_params.is_empty());
}

#[test]
fn zero_epochs_reports_only_the_initial_evaluation() {
    let config = small(0);
    let (train_set, eval_set) = data(&config, 40, 0.1, 1);
    let out = train(&config, &train_set, &eval_set).unwrap();
    assert!(out.report.epochs.is_empty());
    assert!(out.report.steps.is_empty());
    assert_eq!(out.report.final_metrics, out.report.initial.metrics);
    assert_eq!(out.report.best_epoch, 0);

    let mut fresh = ParamStore::new();
    CssModel::build(&config, &mut fresh).unwrap();
    assert_eq!(fresh.len(), out.store.len());
    for (a, b) in fresh.entries().iter().zip(out.store.entries()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn static_weights_log_no_gamma_and_average_the_losses() {
    let config = small(2);
    let (train_set, eval_set) = data(&config, 60, 0.1, 2);
    let out = ablate(&config, "w/o PGM", &train_set, &eval_set).unwrap();
    assert!(out.report.steps.is_empty());
    assert_eq!(out.report.gamma_csv().lines().count(), 1);
    for row in &out.report.epochs {
        assert!(row.gamma_mean.is_none());
        let t = &row.train;
        let mean = (t.l1 + t.l2 + t.l3) / 3.0;
        assert!((row.train_composite - mean).abs() < 1e-12, "{} vs {mean}", row.train_composite);
        assert!((row.train_uniform_composite - mean).abs() < 1e-12);
    }
}

#[test]
fn dropping_distillation_leaves_two_tasks() {
    let config = small(1);
    let (train_set, eval_set) = data(&config, 40, 0.1, 3);
    let out = ablate(&config, "w/o L3", &train_set, &eval_set).unwrap();
    assert!(!out.report.steps.is_empty());
    for s in &out.report.steps {
        assert_eq!(s.gamma[2], 0.0);
        assert!((s.gamma[0] + s.gamma[1] - 1.0).abs() < 1e-12);
    }
    let row = &out.report.epochs[0];
    assert!((row.train_uniform_composite - (row.train.l1 + row.train.l2) / 2.0).abs() < 1e-12);
}

#[test]
fn pareto_steps_stay_on_the_simplex() {
    let config = small(1);
    let (train_set, eval_set) = data(&config, 40, 0.1, 4);
    let out = train(&config, &train_set, &eval_set).unwrap();
    let batches = train_set.dialogues.len().div_ceil(config.batch_size);
    assert_eq!(out.report.steps.len(), batches);
    for s in &out.report.steps {
        assert!(s.gamma.iter().all(|&g| g >= 0.0));
        assert!((s.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if !s.fallback {
            assert!(s.pareto_slack.unwrap() >= -1e-8);
        }
    }
}

#[test]
fn every_variant_trains_without_nan() {
    for seed in 0..5 {
        let config = TrainConfig { seed, ..small(2) };
        let (train_set, eval_set) = data(&config, 60, 0.1, seed);
        for v in Variant::ALL {
            let out = ablate(&config, &v.to_string(), &train_set, &eval_set).unwrap();
            assert_eq!(out.report.epochs.len(), 2, "{v}");
            for row in &out.report.epochs {
                assert!(row.train.is_finite() && row.eval.losses.is_finite(), "{v} seed {seed}");
            }
        }
    }
}

#[test]
fn unknown_variant_is_an_error() {
    let config = small(1);
    let (train_set, eval_set) = data(&config, 20, 0.1, 5);
    assert!(ablate(&config, "w/o everything", &train_set, &eval_set).is_err());
}

#[test]
fn same_seed_same_report() {
    let config = small(2);
    let (train_set, eval_set) = data(&config, 40, 0.1, 6);
    let a = train(&config, &train_set, &eval_set).unwrap();
    let b = train(&config, &train_set, &eval_set).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.curves_csv(), b.report.curves_csv());
    assert_eq!(a.report.gamma_csv(), b.report.gamma_csv());
}

#[test]
fn keeping_every_modality_is_plain_evaluation() {
    let config = small(1);
    let (train_set, eval_set) = data(&config, 40, 0.1, 7);
    let out = train(&config, &train_set, &eval_set).unwrap();
    let full = evaluate(&out.model, &out.store, &eval_set, &config, &ALL).unwrap();
    let kept = modality_dropout_eval(&out.model, &out.store, &eval_set, &config, &ALL).unwrap();
    assert_eq!(full.metrics, kept);
    assert!(modality_dropout_eval(&out.model, &out.store, &eval_set, &config, &[]).is_err());
}

#[test]
fn incompatible_data_is_rejected_before_training() {
    let config = small(1);
    let other = TrainConfig { d_text: 5, ..config.clone() };
    let (train_set, eval_set) = data(&other, 20, 0.1, 8);
    assert!(train(&config, &train_set, &eval_set).is_err());
}
