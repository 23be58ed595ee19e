use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use dialogue_rl::config::RunConfig;
use dialogue_rl::exec::Execution;
use dialogue_rl_cli as stages;

#[derive(Parser)]
#[command(name = "dialogue-rl", version, about = "Knowledge-grounded dialogue strategy learning in self-play")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic persona corpus.
    GenCorpus(Common),
    /// Supervised pre-training of the generation model.
    Pretrain(Common),
    /// Train the coherence scorer on positive and negative continuations.
    TrainCoherence(Common),
    /// Self-play policy-gradient training of knowledge selection.
    TrainRl(Common),
    /// Greedy self-play on held-out scenarios.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint; the RL policy by default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Speaker whose knowledge usage goes into the usage matrix.
        #[arg(long, default_value_t = 0)]
        speaker: usize,
    },
    /// Distinct-n and knowledge metrics of greedy self-play.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint; the RL policy by default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Label for `metrics-<name>.json`.
        #[arg(long, default_value = "policy")]
        name: String,
    },
    /// Collect every metrics file into `report.csv`.
    Report(Common),
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    turns: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "k")]
    baseline_samples: Option<usize>,
    #[arg(long)]
    lr_pretrain: Option<f64>,
    #[arg(long)]
    lr_rl: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.d {
            c.d = v;
        }
        if let Some(v) = self.turns {
            c.turns = v;
        }
        if let Some(v) = self.batch {
            c.batch = v;
        }
        if let Some(v) = self.baseline_samples {
            c.baseline_samples = v;
        }
        if let Some(v) = self.lr_pretrain {
            c.lr_pretrain = v;
        }
        if let Some(v) = self.lr_rl {
            c.lr_rl = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = &self.output {
            c.paths.output = v.clone();
        }
        if let Some(v) = &self.checkpoints {
            c.paths.checkpoints = v.clone();
        }
        if let Some(v) = &self.corpus {
            c.paths.corpus = Some(v.clone());
        }
        if let Some(v) = &self.stopwords {
            c.paths.stopwords = Some(v.clone());
        }
        if self.sequential {
            c.execution = Execution::Sequential;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(common) => {
            let config = common.resolve()?;
            let corpus = stages::gen_corpus(&config)?;
            println!(
                "wrote {} dialogues ({} tokens) to {}",
                corpus.dialogues.len(),
                corpus.vocab.len(),
                config.corpus_path().display()
            );
        }
        Command::Pretrain(common) => {
            let config = common.resolve()?;
            let curve = stages::pretrain_stage(&config)?;
            if let Some(last) = curve.last() {
                println!("epoch {}: nll {:.4} bag-of-words {:.4}", last.epoch, last.nll, last.bag_of_words);
            }
            println!("wrote {}", config.pretrained_checkpoint().display());
        }
        Command::TrainCoherence(common) => {
            let config = common.resolve()?;
            let report = stages::coherence_stage(&config)?;
            println!("held-out AUC {:.4} (untrained {:.4})", report.auc, report.initial_auc);
        }
        Command::TrainRl(common) => {
            let config = common.resolve()?;
            let curve = stages::train_rl_stage(&config)?;
            if let Some(last) = curve.last() {
                println!(
                    "iteration {}: R {:.4} r_I {:.4} coherence {:.4}",
                    last.iteration, last.reward, last.informativeness, last.coherence
                );
            }
            println!("wrote {}", config.policy_checkpoint().display());
        }
        Command::Simulate {
            common,
            checkpoint,
            speaker,
        } => {
            let config = common.resolve()?;
            let checkpoint = checkpoint.unwrap_or_else(|| config.policy_checkpoint());
            let trajectories = stages::simulate_stage(&config, &checkpoint, speaker)?;
            let n = trajectories.len().max(1) as f64;
            let mean_r_i = trajectories.iter().map(|t| t.reward.r_i).sum::<f64>() / n;
            println!("{} conversations, mean r_I {:.4}", trajectories.len(), mean_r_i);
        }
        Command::Eval {
            common,
            checkpoint,
            name,
        } => {
            let config = common.resolve()?;
            let checkpoint = checkpoint.unwrap_or_else(|| config.policy_checkpoint());
            let report = stages::eval_stage(&config, &checkpoint, &name)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report(common) => {
            let config = common.resolve()?;
            print!("{}", stages::report_stage(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
