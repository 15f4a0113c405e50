//! Command-line driver: phase training, tokenizer tools, evaluation, report
//! rendering and significance tests over stored results.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod run_dir;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use l2lab::curriculum::Phase;

use crate::commands::eval::{EvalConfig, EvalLang};
use crate::commands::{eval, recipe, report, stats, synth, tokenize, train};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "l2lab", version, about = "Second-language acquisition experiments with small masked LMs")]
pub struct Cli {
    /// Config file for training commands and recipes.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Runs on a single thread.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrains a monolingual L1 model.
    TrainL1,
    /// Continues a checkpoint on the parallel corpus under an exposure regime.
    TrainL2 {
        /// Starts from fresh weights instead of `init_checkpoint`.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Continues a checkpoint on the L1 side of the parallel corpus only.
    TrainL1Only,
    /// Trains, extends or applies BPE tokenizers.
    #[command(subcommand)]
    Tokenize(TokenizeCommand),
    /// Scores checkpoints on minimal-pair suites.
    Eval {
        /// Checkpoint files or run directories (all their checkpoints).
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Tokenizer directory; defaults to the one stored in the run.
        #[arg(long)]
        tokenizer: Option<PathBuf>,
        /// Directory of `*.jsonl` suites.
        #[arg(long)]
        suites: PathBuf,
        /// TSV mapping UIDs and suites to categories.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Language id the suites are scored under.
        #[arg(long, value_enum, default_value_t = EvalLang::L2)]
        lang: EvalLang,
        /// Output directory for reports and the trajectory CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders tables and charts from stored reports.
    Report {
        /// Report files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory for tables and charts.
        #[arg(long)]
        out: PathBuf,
        /// Regime whose pretrained and scratch runs form the gain tables.
        #[arg(long, default_value = "drop")]
        regime: String,
    },
    /// Mann-Whitney U test between two CSV columns.
    Stats {
        csv: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Largest combined sample size that gets the exact distribution.
        #[arg(long, default_value_t = l2lab::stats::DEFAULT_EXACT_MAX)]
        exact_max: usize,
    },
    /// Writes the synthetic corpora and suites.
    Synth(synth::SynthArgs),
    /// Runs a whole experiment recipe (`--config`).
    Recipe,
}

#[derive(Debug, Subcommand)]
pub enum TokenizeCommand {
    /// Learns BPE codes on a corpus.
    Train {
        corpus: PathBuf,
        #[arg(long, default_value_t = 14_000)]
        merges: usize,
        #[arg(long, default_value_t = l2lab::tokenizer::DEFAULT_VOCAB_CAP)]
        cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Appends L2 codes to an existing tokenizer; old ids are kept.
    Extend {
        base: PathBuf,
        corpus: PathBuf,
        #[arg(long, default_value_t = 14_000)]
        merges: usize,
        #[arg(long, default_value_t = l2lab::tokenizer::DEFAULT_VOCAB_CAP)]
        cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segments a text file, one line per sentence.
    Apply {
        tokenizer: PathBuf,
        input: PathBuf,
        /// Prints ids instead of subwords.
        #[arg(long)]
        ids: bool,
    },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::config("--config is required for training commands"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn train_phase(cli: &Cli, phase: Phase, from_scratch: bool) -> Result<()> {
    let mut cfg = run_config(cli)?;
    cfg.from_scratch |= from_scratch;
    let s = train::run(&cfg, phase)?;
    match s.final_dev_loss {
        Some(l) => println!("{}: {} checkpoints, dev loss {l:.4}", s.dir.display(), s.checkpoints.len()),
        None => println!("{}: {} checkpoints", s.dir.display(), s.checkpoints.len()),
    }
    Ok(())
}

fn expand_checkpoints(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        files::require_exists("checkpoint", p)?;
        if p.is_dir() {
            out.extend(eval::run_checkpoints(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn default_tokenizer(checkpoints: &[PathBuf]) -> Result<PathBuf> {
    checkpoints
        .first()
        .and_then(|c| eval::tokenizer_of(c))
        .ok_or_else(|| CliError::config("--tokenizer is required when checkpoints are not inside a run directory"))
}

fn install_serial_pool() -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))
}

fn absolute(p: &Path) -> PathBuf {
    files::resolve(Path::new("."), p)
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.serial {
        install_serial_pool()?;
    }
    match &cli.command {
        Command::TrainL1 => train_phase(&cli, Phase::L1, false),
        Command::TrainL2 { from_scratch } => train_phase(&cli, Phase::L2, *from_scratch),
        Command::TrainL1Only => train_phase(&cli, Phase::L1Only, false),
        Command::Tokenize(t) => match t {
            TokenizeCommand::Train { corpus, merges, cap, out } => {
                let tok = tokenize::train(corpus, *merges, *cap, out)?;
                println!("{}: {} entries", out.display(), tok.vocab.len());
                Ok(())
            }
            TokenizeCommand::Extend { base, corpus, merges, cap, out } => {
                let (tok, base_size) = tokenize::extend(base, corpus, *merges, *cap, out)?;
                println!("{}: {} entries ({} added)", out.display(), tok.vocab.len(), tok.vocab.len() - base_size);
                Ok(())
            }
            TokenizeCommand::Apply { tokenizer, input, ids } => {
                print!("{}", tokenize::apply(tokenizer, input, *ids)?);
                Ok(())
            }
        },
        Command::Eval { checkpoints, tokenizer, suites, mapping, lang, out } => {
            let checkpoints = expand_checkpoints(checkpoints)?;
            let tokenizer = match tokenizer {
                Some(t) => t.clone(),
                None => default_tokenizer(&checkpoints)?,
            };
            let cfg = EvalConfig {
                checkpoints: checkpoints.iter().map(|p| absolute(p)).collect(),
                tokenizer: absolute(&tokenizer),
                suites: absolute(suites),
                mapping: mapping.as_deref().map(absolute),
                lang: *lang,
            };
            eval::run(&cfg, out).map(|_| ())
        }
        Command::Report { inputs, out, regime } => {
            print!("{}", report::run(inputs, out, regime)?);
            Ok(())
        }
        Command::Stats { csv, a, b, exact_max } => {
            let r = stats::run(csv, a, b, *exact_max)?;
            println!("{}", serde_json::to_string(&r).map_err(|e| CliError::runtime(e.to_string()))?);
            Ok(())
        }
        Command::Synth(args) => synth::run(args),
        Command::Recipe => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| CliError::config("--config is required for recipe"))?;
            let mut r = recipe::ExperimentRecipe::load(path)?;
            if let Some(s) = cli.seed {
                r.seeds = vec![s];
            }
            print!("{}", recipe::run(&r)?);
            Ok(())
        }
    }
}
