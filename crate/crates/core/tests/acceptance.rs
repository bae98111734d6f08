//! Acceptance criteria, run as a plain program so every result line is
//! printed: one `PASS`/`FAIL` line per criterion with the measured
//! quantities, and a non-zero exit status if any criterion fails.
//!
//! The training criteria share one set of desk-profile runs (five seeds,
//! 2,000 training dialogues at noise 0.1) computed on first use.

use std::sync::OnceLock;
use std::time::Instant;

use cross_synergy::encoder::Modality;
use cross_synergy::gradcheck::{self, TOLERANCE};
use cross_synergy::metrics::{summarize, ConfusionMatrix};
use cross_synergy::numeric::Rng;
use cross_synergy::pgm::{pareto_weights, run_qpbench, solve_simplex_qp, GradientBundle};
use cross_synergy::synthdata::{generate, Dataset, OracleDecoder};
use cross_synergy::trainer::checkpoint::encode_checkpoint;
use cross_synergy::trainer::{evaluate, train, RunReport, TrainConfig, Variant};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const NOISE: f64 = 0.1;
const DIALOGUES: usize = 2500;

fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

struct SeedRuns {
    oracle: f64,
    full: RunReport,
    no_spf: RunReport,
    uniform: RunReport,
}

fn planted(seed: u64) -> (TrainConfig, Dataset, Dataset) {
    let config = TrainConfig { seed, ..TrainConfig::desk() };
    let data = generate(&config.gen_config(DIALOGUES, NOISE, 0.0, seed)).expect("generate");
    let (train_set, test_set) = data.split(config.eval_fraction).expect("split");
    (config, train_set, test_set)
}

fn seed_runs() -> &'static [SeedRuns] {
    static RUNS: OnceLock<Vec<SeedRuns>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&seed| {
                let (config, train_set, test_set) = planted(seed);
                let run = |c: &TrainConfig| train(c, &train_set, &test_set).expect("training").report;
                let start = Instant::now();
                let full = run(&config);
                println!("seed {seed}: full model trained in {:.1}s", start.elapsed().as_secs_f64());
                SeedRuns {
                    oracle: OracleDecoder::new(&test_set.config).accuracy(&test_set, &Modality::ALL),
                    full,
                    no_spf: run(&Variant::NoSpf.apply(&config)),
                    uniform: run(&Variant::NoPgm.apply(&config)),
                }
            })
            .collect()
    })
}

fn gradient_fidelity() -> bool {
    let start = Instant::now();
    let summaries = gradcheck::run_all(gradcheck::DEFAULT_TRIALS, 0).expect("gradcheck");
    let seconds = start.elapsed().as_secs_f64();
    for s in &summaries {
        println!("  {s}");
    }
    let worst = summaries.iter().map(|s| s.worst).fold(0.0, f64::max);
    let pass = summaries.iter().all(|s| s.passed() && s.trials >= 50) && seconds < 60.0;
    report(
        "gradient fidelity",
        pass,
        &format!("{} modules x 50 trials, worst rel err {worst:.2e} (< {TOLERANCE:e}), {seconds:.1}s (< 60s)", summaries.len()),
    );
    pass
}

fn qp_exactness() -> bool {
    let bench = run_qpbench(200, 0.01, 0).expect("qpbench");
    let identity: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let id = solve_simplex_qp(&identity).expect("qp");
    let id_ok = id.gamma.iter().all(|g| (g - 1.0 / 3.0).abs() < 1e-12) && !id.fallback;
    let dup = pareto_weights(&GradientBundle::new(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
    let dup_ok = dup.gamma.iter().zip([0.25, 0.25, 0.5]).all(|(g, w)| (g - w).abs() < 1e-12) && !dup.fallback;
    let opp = pareto_weights(&GradientBundle::new(vec![vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap()).unwrap();
    let opp_ok = opp.fallback && opp.gamma == vec![1.0, 0.0];
    let pass = bench.passed() && id_ok && dup_ok && opp_ok;
    report(
        "QP exactness",
        pass,
        &format!(
            "200 random Grams: worst gap {:.2e} (<= 1e-6), worst KKT {:.2e} (< 1e-8); identity {:?}; duplicated {:?}; opposing fallback={}",
            bench.worst_gap, bench.worst_kkt, id.gamma, dup.gamma, opp.fallback
        ),
    );
    pass
}

fn pareto_descent() -> bool {
    let mut checked = 0;
    let mut fallbacks = 0;
    let mut worst = f64::INFINITY;
    for r in seed_runs() {
        for s in r.full.steps.iter().filter(|s| s.epoch <= 5) {
            match s.pareto_slack {
                Some(slack) => {
                    checked += 1;
                    worst = worst.min(slack);
                }
                None => fallbacks += 1,
            }
        }
    }
    let pass = checked > 0 && worst >= -1e-8;
    report(
        "Pareto descent",
        pass,
        &format!("{checked} non-fallback steps over 5 seeds x 5 epochs, min(<d,g_i> - <d,d>) = {worst:.3e}, {fallbacks} fallback steps"),
    );
    pass
}

fn planted_task_separation() -> bool {
    let runs = seed_runs();
    let oracle: Vec<f64> = runs.iter().map(|r| r.oracle).collect();
    let full: Vec<f64> = runs.iter().map(|r| r.full.final_metrics.accuracy).collect();
    let no_spf: Vec<f64> = runs.iter().map(|r| r.no_spf.final_metrics.accuracy).collect();
    let oracle_ok = oracle.iter().all(|&a| a >= 0.97);
    let full_ok = full.iter().all(|&a| a >= 0.90);
    let no_spf_ok = no_spf.iter().all(|&a| a <= 0.75);
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ");
    report(
        "planted-task separation",
        oracle_ok && full_ok && no_spf_ok,
        &format!(
            "oracle [{}] (>= 0.97: {oracle_ok}); full [{}] (>= 0.90: {full_ok}); w/o SPF [{}] (<= 0.75: {no_spf_ok})",
            fmt(&oracle),
            fmt(&full),
            fmt(&no_spf)
        ),
    );
    oracle_ok && full_ok && no_spf_ok
}

/// Epoch-to-epoch changes of the uniformly weighted training loss over the
/// last quarter of epochs.
fn late_deltas(r: &RunReport) -> Vec<f64> {
    let n = r.epochs.len();
    let first = n - (n / 4).max(1);
    let losses: Vec<f64> = r.epochs.iter().map(|e| e.train_uniform_composite).collect();
    (first.max(1)..n).map(|i| losses[i] - losses[i - 1]).collect()
}

fn pgm_stability() -> bool {
    let runs = seed_runs();
    let pgm: Vec<f64> = runs.iter().flat_map(|r| late_deltas(&r.full)).collect();
    let uni: Vec<f64> = runs.iter().flat_map(|r| late_deltas(&r.uniform)).collect();
    let (sp, su) = (std_dev(&pgm), std_dev(&uni));
    let l3 = |pick: fn(&SeedRuns) -> &RunReport, m: usize| {
        mean(&runs.iter().map(|r| pick(r).epochs.last().unwrap().train.l3_per[m]).collect::<Vec<_>>())
    };
    let l3_pgm: Vec<f64> = (0..3).map(|m| l3(|r| &r.full, m)).collect();
    let l3_uni: Vec<f64> = (0..3).map(|m| l3(|r| &r.uniform, m)).collect();
    let std_ok = sp <= 1.10 * su;
    let l3_ok = l3_pgm.iter().zip(&l3_uni).all(|(p, u)| *p <= 1.10 * u);
    report(
        "PGM stability",
        std_ok && l3_ok,
        &format!(
            "std of late loss deltas: PGM {sp:.3e} vs uniform {su:.3e} (ratio {:.3}, <= 1.10: {std_ok}); \
             final L3 per modality PGM {:.3e}/{:.3e}/{:.3e} vs uniform {:.3e}/{:.3e}/{:.3e} (<= 1.10x: {l3_ok}); \
             strictly lower std: {}, strictly lower L3: {}; modality-averaged L3 PGM {:.3e} vs uniform {:.3e} (not gated)",
            sp / su,
            l3_pgm[0], l3_pgm[1], l3_pgm[2], l3_uni[0], l3_uni[1], l3_uni[2],
            sp <= su,
            l3_pgm.iter().zip(&l3_uni).all(|(p, u)| p <= u),
            mean(&l3_pgm),
            mean(&l3_uni)
        ),
    );
    std_ok && l3_ok
}

fn mask_invariance() -> bool {
    let config = TrainConfig { epochs: 1, ..TrainConfig::desk() };
    let data = generate(&config.gen_config(120, NOISE, 0.2, 9)).unwrap();
    let (train_set, test_set) = data.split(0.25).unwrap();
    let out = train(&config, &train_set, &test_set).unwrap();
    let mut all_equal = true;
    for extra in [1, 5, 20] {
        let longer = TrainConfig { max_len: config.max_len + extra, ..config.clone() };
        for kept in [&Modality::ALL[..], &[Modality::Text, Modality::Visual][..]] {
            let a = evaluate(&out.model, &out.store, &test_set, &config, kept).unwrap();
            let b = evaluate(&out.model, &out.store, &test_set, &longer, kept).unwrap();
            all_equal &= a == b;
        }
    }
    let batches = test_set.batches(&(0..test_set.dialogues.len()).collect::<Vec<_>>(), 8, config.max_len).unwrap();
    for batch in &batches {
        let (r1, c1) = out.model.evaluate_batch(&out.store, batch).unwrap();
        let (r2, c2) = out.model.evaluate_batch(&out.store, &batch.padded_to(config.max_len + 7).unwrap()).unwrap();
        all_equal &= r1 == r2 && c1 == c2;
    }
    report(
        "mask invariance",
        all_equal,
        &format!("{} batches and 6 full evaluations compared bit-for-bit after padding by 1, 5, 7 and 20 rows", batches.len()),
    );
    all_equal
}

fn determinism() -> bool {
    let config = TrainConfig { epochs: 2, seed: 5, ..TrainConfig::desk() };
    let data = generate(&config.gen_config(80, NOISE, 0.1, 5)).unwrap();
    let (train_set, test_set) = data.split(0.25).unwrap();
    let a = train(&config, &train_set, &test_set).unwrap();
    let b = train(&config, &train_set, &test_set).unwrap();
    let same_report = a.report.to_json() == b.report.to_json();
    let same_ckpt = encode_checkpoint(&config, &a.store).unwrap() == encode_checkpoint(&config, &b.store).unwrap();
    let other = train(&TrainConfig { seed: 6, ..config.clone() }, &train_set, &test_set).unwrap();
    let differs = other.report.to_json() != a.report.to_json();
    let pass = same_report && same_ckpt && differs;
    report(
        "determinism",
        pass,
        &format!("report bytes equal: {same_report}; checkpoint bytes equal: {same_ckpt}; other seed differs: {differs}"),
    );
    pass
}

fn metrics_oracle() -> bool {
    let mut rng = Rng::new(17);
    let mut exact = true;
    for _ in 0..100 {
        let c = 2 + rng.below(6);
        let n = 1 + rng.below(60);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let pred: Vec<usize> = truth.iter().map(|&t| if rng.bernoulli(0.5) { t } else { rng.below(c) }).collect();
        let mut cm = ConfusionMatrix::new(c);
        let labels: Vec<i64> = truth.iter().map(|&t| t as i64).collect();
        cm.accumulate(&pred, &labels, &vec![true; n]).unwrap();
        let s = summarize(&cm).unwrap();
        // Brute force straight from the sample lists.
        let count = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count() as u64;
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let correct = count(&|i| truth[i] == pred[i]);
        exact &= s.accuracy == ratio(correct, n as u64);
        let mut weighted = 0.0;
        for k in 0..c {
            let tp = count(&|i| truth[i] == k && pred[i] == k);
            let actual = count(&|i| truth[i] == k);
            let predicted = count(&|i| pred[i] == k);
            let (p, r) = (ratio(tp, predicted), ratio(tp, actual));
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            exact &= s.class_recall[k] == r && s.class_f1[k] == f1 && s.support[k] == actual;
            weighted += actual as f64 * f1;
        }
        exact &= s.weighted_f1 == weighted / n as f64;
    }
    let mut cm = ConfusionMatrix::new(2);
    cm.accumulate(&[0, 1, 0], &[0, 1, 1], &[true; 3]).unwrap();
    let hand = summarize(&cm).unwrap();
    let hand_ok = hand.accuracy == 2.0 / 3.0 && (hand.weighted_f1 - 2.0 / 3.0).abs() < 1e-15;
    report(
        "metrics oracle",
        exact && hand_ok,
        &format!("100 random matrices exact: {exact}; hand-worked case ACC {} wF1 {}", hand.accuracy, hand.weighted_f1),
    );
    exact && hand_ok
}

fn modality_ablation_shape() -> bool {
    use Modality::{Audio, Text, Visual};
    let subsets: [&[Modality]; 6] = [&[Audio, Visual], &[Text, Visual], &[Text, Audio], &[Text], &[Audio], &[Visual]];
    let full: Vec<f64> = seed_runs().iter().map(|r| r.full.final_metrics.accuracy).collect();
    let mut acc = Vec::new();
    for kept in subsets {
        let per_seed: Vec<f64> = SEEDS
            .iter()
            .map(|&seed| {
                let (config, train_set, test_set) = planted(seed);
                train(&config, &train_set.with_modalities_zeroed(kept), &test_set.with_modalities_zeroed(kept))
                    .expect("training")
                    .report
                    .final_metrics
                    .accuracy
            })
            .collect();
        acc.push(mean(&per_seed));
    }
    let full_mean = mean(&full);
    let name = |kept: &[Modality]| kept.iter().map(|m| m.short()).collect::<String>();
    let pairs_below_full = acc[..3].iter().all(|&a| a < full_mean);
    let mut singles_below_pairs = true;
    for (i, single) in subsets[3..].iter().enumerate() {
        for (j, pair) in subsets[..3].iter().enumerate() {
            if pair.contains(&single[0]) {
                singles_below_pairs &= acc[3 + i] < acc[j];
            }
        }
    }
    let table = subsets
        .iter()
        .zip(&acc)
        .map(|(k, a)| format!("{}={a:.3}", name(k)))
        .collect::<Vec<_>>()
        .join(" ");
    let pass = pairs_below_full && singles_below_pairs;
    report(
        "modality ablation shape",
        pass,
        &format!(
            "mean acc over 5 seeds: tav={full_mean:.3} {table}; every pair below full: {pairs_below_full}; \
             every single below each pair containing it: {singles_below_pairs}"
        ),
    );
    pass
}

fn main() {
    let criteria: [(&str, fn() -> bool); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("QP exactness", qp_exactness),
        ("Pareto descent", pareto_descent),
        ("planted-task separation", planted_task_separation),
        ("PGM stability", pgm_stability),
        ("mask invariance", mask_invariance),
        ("determinism", determinism),
        ("metrics oracle", metrics_oracle),
        ("modality ablation shape", modality_ablation_shape),
    ];
    let start = Instant::now();
    let failed: Vec<&str> = criteria.iter().filter(|(_, run)| !run()).map(|(name, _)| *name).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        criteria.len() - failed.len(),
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
