use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use cross_synergy::encoder::Modality;
use cross_synergy::gradcheck::{self, GradModule};
use cross_synergy::metrics::Summary;
use cross_synergy::pgm::run_qpbench;
use cross_synergy::synthdata::{generate, read_dataset, write_dataset, GenConfig};
use cross_synergy::trainer::config::SEED_ENV;
use cross_synergy::trainer::{
    ablate, evaluate, load_checkpoint, load_datasets, train, write_outputs, TrainConfig, Variant,
};

#[derive(Parser)]
#[command(name = "css", version, about = "Multimodal fusion and Pareto multi-task training on synthetic dialogues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a generator config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and write report.json, curves.csv, gamma.csv, timing.csv and model.ckpt.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `train_data` in the config.
        #[arg(long)]
        data: Option<String>,
        /// Overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on every dialogue of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated modalities to keep; the rest are zeroed.
        #[arg(long, default_value = "text,audio,visual")]
        modalities: String,
    },
    /// Train one ablation variant and print its result row.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// One of: w/o SPF, w/o MSP, w/o PGM, w/o MAE, w/o IAE, w/o L2, w/o L3.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every backward pass.
    Gradcheck {
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = gradcheck::DEFAULT_TRIALS)]
        trials: usize,
    },
    /// Compare the simplex QP solver with grid search on random Gram matrices.
    Qpbench {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
    },
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?}"))?)),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &PathBuf) -> anyhow::Result<TrainConfig> {
    Ok(TrainConfig::load(path)?.with_env_seed()?)
}

fn row(label: &str, m: &Summary) -> String {
    format!("{label}\tACC={:.2}\tw-F1={:.2}", 100.0 * m.accuracy, 100.0 * m.weighted_f1)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Gen { config, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut gen: GenConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(seed) = env_seed()? {
                gen.seed = seed;
            }
            let data = generate(&gen)?;
            write_dataset(&out, &data)?;
            println!("wrote {} dialogues ({} utterances) to {}", data.dialogues.len(), data.utterances(), out.display());
        }
        Command::Train { config, data, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.out_dir = Some(out.display().to_string());
            }
            let Some(dir) = cfg.out_dir.clone() else {
                bail!("no output directory: pass --out or set out_dir");
            };
            let (train_set, eval_set) = load_datasets(&cfg, data.as_deref())?;
            let outcome = train(&cfg, &train_set, &eval_set)?;
            write_outputs(&dir, &outcome)?;
            println!("{}", outcome.report.summary_line("train"));
        }
        Command::Eval { model, data, modalities } => {
            let kept = modalities
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| Modality::from_name(s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let (cfg, css, store) = load_checkpoint(&model)?;
            let dataset = read_dataset(&data)?;
            cross_synergy::trainer::train::check_compatible(&cfg, &dataset)?;
            let eval = evaluate(&css, &store, &dataset, &cfg, &kept)?;
            print!("{}", eval.metrics.to_key_values());
            let l = &eval.losses;
            println!("l1={:.6}\nl2={:.6}\nl3={:.6}", l.l1, l.l2, l.l3);
        }
        Command::Ablate { config, variant, data, out } => {
            let cfg = load_config(&config)?;
            let parsed = Variant::parse(&variant)?;
            let (train_set, eval_set) = load_datasets(&cfg, data.as_deref())?;
            let outcome = ablate(&cfg, &variant, &train_set, &eval_set)?;
            if let Some(dir) = out.or_else(|| cfg.out_dir.clone().map(PathBuf::from)) {
                write_outputs(&dir, &outcome)?;
            }
            println!("{}", row(&parsed.to_string(), &outcome.report.final_metrics));
        }
        Command::Gradcheck { module, trials } => {
            let seed = env_seed()?.unwrap_or(0);
            let modules = match module {
                Some(m) => vec![GradModule::parse(&m)?],
                None => GradModule::ALL.to_vec(),
            };
            let mut ok = true;
            for m in modules {
                let s = gradcheck::run_module(m, trials, seed)?;
                println!("{s}");
                ok &= s.passed();
            }
            return Ok(ok);
        }
        Command::Qpbench { trials, grid } => {
            let report = run_qpbench(trials, grid, env_seed()?.unwrap_or(0))?;
            println!("{report}");
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
