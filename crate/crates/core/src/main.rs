use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dgm_core::corpus::{generate_synthetic, load_dataset, save_dataset, SynthConfig, Vocabulary};
use dgm_core::graph::{build_levi_graph, relation_histogram, serialize_graph};
use dgm_core::harness::{
    evaluate, gradient_check, load_checkpoint, run_ablation, save_checkpoint, Checkpoint, TrainConfig, Trainer,
};
use dgm_core::model::{prepare, Ablation, ModelParams};

#[derive(Parser)]
#[command(name = "dgm", version, about = "Dialogue graph modeling for conversational machine reading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSON Lines.
    GenData {
        /// Generator settings (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write the best-dev checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics as JSON Lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the report here (JSON when the extension is .json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare backprop gradients with central differences.
    GradCheck {
        #[arg(long, conflicts_with = "random", required_unless_present = "random")]
        ckpt: Option<PathBuf>,
        /// Use a small randomly initialized model on synthetic examples.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Check examples from this dataset instead of synthetic ones.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Coordinates sampled per tensor; all when omitted.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump the Levi graph of one example as JSON.
    Graph {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: usize,
    },
    /// Relation-type histogram of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train every ablation variant over several seeds and compare.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_config(path: &PathBuf) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TrainConfig::from_toml(&text)?)
}

fn load(path: &PathBuf) -> Result<Vec<dgm_core::corpus::Example>> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let cfg = match config {
                Some(p) => SynthConfig::from_toml(&fs::read_to_string(&p)?)?,
                None => SynthConfig::default(),
            };
            let data = generate_synthetic(&cfg, seed)?;
            save_dataset(&out, &data)?;
            println!("wrote {} examples to {}", data.len(), out.display());
        }
        Command::Train { config, train, dev, out, log } => {
            let cfg = read_config(&config)?;
            let train_set = load(&train)?;
            let dev_set = match dev {
                Some(p) => load(&p)?,
                None => Vec::new(),
            };
            let mut trainer = Trainer::new(cfg.clone(), &train_set, &dev_set)?;
            let mut lines = String::new();
            for _ in 0..cfg.epochs {
                let m = trainer.run_epoch()?;
                println!(
                    "epoch {:>3} loss {:.4} train {:.3} dev micro {} macro {}",
                    m.epoch,
                    m.loss,
                    m.train_accuracy,
                    m.dev_micro.map_or("-".into(), |v| format!("{v:.3}")),
                    m.dev_macro.map_or("-".into(), |v| format!("{v:.3}")),
                );
                lines.push_str(&serde_json::to_string(&m)?);
                lines.push('\n');
            }
            if let Some(p) = log {
                fs::write(p, lines)?;
            }
            let outcome = trainer.finish();
            let ckpt = Checkpoint { config: outcome.config, vocab: outcome.vocab, params: outcome.params };
            save_checkpoint(&out, &ckpt)?;
            println!("best epoch {}; checkpoint written to {}", outcome.best_epoch, out.display());
        }
        Command::Eval { ckpt, data, report } => {
            let ck = load_checkpoint(&ckpt)?;
            let report_value = evaluate(&ck.params, &ck.vocab, &load(&data)?)?;
            println!("{report_value}");
            if let Some(p) = report {
                let text = if p.extension().is_some_and(|e| e == "json") {
                    serde_json::to_string_pretty(&report_value)?
                } else {
                    format!("{report_value}\n")
                };
                fs::write(p, text)?;
            }
        }
        Command::GradCheck { ckpt, random, tol, eps, data, sample, seed } => {
            let (params, vocab, lambda, span_weight, examples) = if random {
                let synth = SynthConfig { examples: 200, min_edus: 2, max_edus: 3, ..SynthConfig::default() };
                let pool = match &data {
                    Some(p) => load(p)?,
                    None => generate_synthetic(&synth, seed)?,
                };
                let vocab = Vocabulary::build(&pool);
                let cfg = TrainConfig { d: 8, heads: 2, ..TrainConfig::toy(seed) };
                let params = ModelParams::init(cfg.model_config(vocab.len()), seed)?;
                let picks = pick_examples(&pool);
                (params, vocab, cfg.lambda, cfg.span_weight, picks)
            } else {
                let ck = load_checkpoint(ckpt.as_ref().expect("clap requires --ckpt"))?;
                let pool = match &data {
                    Some(p) => load(p)?,
                    None => generate_synthetic(&SynthConfig { examples: 200, ..SynthConfig::default() }, seed)?,
                };
                let picks = pick_examples(&pool);
                (ck.params, ck.vocab, ck.config.lambda, ck.config.span_weight, picks)
            };
            if examples.is_empty() {
                bail!("no example with entailment labels to check");
            }
            let mut worst: f64 = 0.0;
            for ex in &examples {
                let prep = prepare(ex, &vocab, params.config.max_len)?;
                println!("example {} ({} EDUs, {})", ex.example_id, ex.edu_count(), ex.gold_decision);
                for c in gradient_check(&params, &prep, ex, lambda, span_weight, eps, sample, seed)? {
                    let flag = if c.rel_error < tol { "ok" } else { "FAIL" };
                    println!("  {:<28} {:>6}/{:<6} |g| {:.3e} rel {:.3e} {flag}", c.name, c.checked, c.size, c.analytic_norm, c.rel_error);
                    worst = worst.max(c.rel_error);
                }
            }
            println!("max relative error {worst:.3e} (tolerance {tol:.1e})");
            if worst >= tol {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Graph { data, index } => {
            let set = load(&data)?;
            let Some(ex) = set.get(index) else {
                bail!("index {index} out of range for {} examples", set.len());
            };
            println!("{}", serialize_graph(&build_levi_graph(ex.edu_count(), &ex.relation_links)?));
        }
        Command::Stats { data } => {
            print!("{}", relation_histogram(&load(&data)?));
        }
        Command::Ablate { config, train, dev, test, seeds } => {
            let cfg = read_config(&config)?;
            let dev_set = match dev {
                Some(p) => load(&p)?,
                None => Vec::new(),
            };
            let variants = [
                Ablation::default(),
                Ablation { disable_explicit_graph: true, ..Ablation::default() },
                Ablation { disable_implicit_graph: true, ..Ablation::default() },
                Ablation { disable_explicit_graph: true, disable_implicit_graph: true, ..Ablation::default() },
                Ablation { disable_rule_marker: true, ..Ablation::default() },
            ];
            let report = run_ablation(&cfg, &load(&train)?, &dev_set, &load(&test)?, &variants, &seeds)?;
            println!("{report}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// One labeled example per EDU count, smallest counts first.
fn pick_examples(pool: &[dgm_core::corpus::Example]) -> Vec<dgm_core::corpus::Example> {
    let mut picks: Vec<dgm_core::corpus::Example> = Vec::new();
    for ex in pool.iter().filter(|e| e.has_entailment_labels()) {
        if !picks.iter().any(|p| p.edu_count() == ex.edu_count()) {
            picks.push(ex.clone());
        }
    }
    picks.sort_by_key(|e| e.edu_count());
    picks.truncate(2);
    picks
}
