//! Versioned JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use l2lab::curriculum::{MaskingConfig, Phase, Regime, TrainPlan, DEFAULT_CHECKPOINT_EPOCHS};
use l2lab::model::ModelConfig;
use l2lab::tensor::AdamConfig;
use l2lab::tokenizer::DEFAULT_VOCAB_CAP;

use crate::error::{CliError, Result};
use crate::files;

pub const CONFIG_VERSION: u32 = 1;
pub const OUTPUT_ROOT_ENV: &str = "L2LAB_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Monolingual L1 text for L1 pretraining.
    pub mono: Option<PathBuf>,
    /// L1 side of the parallel corpus.
    pub parallel_l1: Option<PathBuf>,
    /// L2 side of the parallel corpus, line-aligned with `parallel_l1`.
    pub parallel_l2: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    /// Existing tokenizer directory (`codes.txt`, `vocab.txt`). For L2 and
    /// L1-only runs this is the L1 tokenizer of the starting checkpoint.
    pub dir: Option<PathBuf>,
    pub merges: usize,
    pub l2_merges: usize,
    pub cap: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            dir: None,
            merges: 14_000,
            l2_merges: 14_000,
            cap: DEFAULT_VOCAB_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub regime: Option<Regime>,
    pub checkpoint_epochs: Vec<u32>,
    pub masking: MaskingConfig,
    pub adam: AdamConfig,
    pub accumulate: usize,
    pub clip_norm: f64,
    pub token_budget: usize,
    pub max_len: usize,
    pub drop_odd_bilingual: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = TrainPlan::default();
        Self {
            epochs: p.epochs,
            regime: None,
            checkpoint_epochs: DEFAULT_CHECKPOINT_EPOCHS.to_vec(),
            masking: p.masking,
            adam: p.adam,
            accumulate: p.accumulate,
            clip_norm: p.clip_norm,
            token_budget: p.token_budget,
            max_len: p.max_len,
            drop_odd_bilingual: p.drop_odd_bilingual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Label of the L1 (e.g. a language code), used in reports.
    #[serde(default)]
    pub l1: Option<String>,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Checkpoint to continue from (L2 and L1-only runs).
    #[serde(default)]
    pub init_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub from_scratch: bool,
    /// Set from the command when the snapshot is written.
    #[serde(default)]
    pub phase: Option<Phase>,
}

impl RunConfig {
    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        files::require_exists("--config", path)?;
        let mut cfg: RunConfig = files::read_json(path)?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "version: expected {CONFIG_VERSION}, found {}",
                cfg.version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                *x = files::resolve(base, x);
            }
        };
        fix(&mut self.corpus.mono);
        fix(&mut self.corpus.parallel_l1);
        fix(&mut self.corpus.parallel_l2);
        fix(&mut self.tokenizer.dir);
        fix(&mut self.init_checkpoint);
        fix(&mut self.output_root);
    }

    /// Output root: the environment override, then the config, then `runs`.
    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_root.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }

    pub fn run_id(&self, phase: Phase) -> String {
        self.run_id.clone().unwrap_or_else(|| {
            let l1 = self.l1.as_deref().unwrap_or("l1");
            match phase {
                Phase::L1 => format!("l1-{l1}-s{}", self.seed),
                Phase::L1Only => format!("l1only-{l1}-s{}", self.seed),
                Phase::L2 => format!(
                    "l2-{l1}-{}-{}-s{}",
                    self.train.regime.unwrap_or(Regime::Drop),
                    if self.from_scratch { "scratch" } else { "pretrained" },
                    self.seed
                ),
            }
        })
    }

    /// The training plan; scheduled epochs beyond `train.epochs` are dropped
    /// and the final epoch is always checkpointed.
    pub fn plan(&self, phase: Phase) -> TrainPlan {
        let t = &self.train;
        TrainPlan {
            phase,
            regime: match phase {
                Phase::L2 => t.regime.unwrap_or(Regime::Drop),
                _ => t.regime.unwrap_or(Regime::Mono),
            },
            epochs: t.epochs,
            checkpoint_epochs: t
                .checkpoint_epochs
                .iter()
                .copied()
                .filter(|&e| e <= t.epochs)
                .chain([t.epochs])
                .collect(),
            seed: self.seed,
            masking: t.masking.clone(),
            adam: t.adam.clone(),
            accumulate: t.accumulate,
            clip_norm: t.clip_norm,
            token_budget: t.token_budget,
            max_len: t.max_len,
            drop_odd_bilingual: t.drop_odd_bilingual,
        }
    }

    /// Checks that every path the phase needs is set and exists; all
    /// problems are reported together, each naming its key.
    pub fn check_inputs(&self, phase: Phase) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |key: &str, p: &Option<PathBuf>| match p {
            None => problems.push(format!("{key} is required")),
            Some(p) if !p.exists() => problems.push(format!("{key}: {} does not exist", p.display())),
            _ => {}
        };
        match phase {
            Phase::L1 => need("corpus.mono", &self.corpus.mono),
            Phase::L2 => {
                need("corpus.parallel_l1", &self.corpus.parallel_l1);
                need("corpus.parallel_l2", &self.corpus.parallel_l2);
                if !self.from_scratch {
                    need("init_checkpoint", &self.init_checkpoint);
                    need("tokenizer.dir", &self.tokenizer.dir);
                }
            }
            Phase::L1Only => {
                need("corpus.parallel_l1", &self.corpus.parallel_l1);
                need("init_checkpoint", &self.init_checkpoint);
                need("tokenizer.dir", &self.tokenizer.dir);
            }
        }
        if let Some(d) = &self.tokenizer.dir {
            if d.exists() {
                for f in [files::CODES_FILE, files::VOCAB_FILE] {
                    if !d.join(f).exists() {
                        problems.push(format!("tokenizer.dir: {} has no {f}", d.display()));
                    }
                }
            } else if !problems.iter().any(|p| p.starts_with("tokenizer.dir")) {
                problems.push(format!("tokenizer.dir: {} does not exist", d.display()));
            }
        }
        if phase == Phase::L1Only && self.from_scratch {
            problems.push("from_scratch: not supported by train-l1-only".into());
        }
        if self.tokenizer.cap < l2lab::tokenizer::NUM_SPECIALS + 1 {
            problems.push("tokenizer.cap must leave room for at least one subword".into());
        }
        if let Err(e) = self.plan(phase).validate() {
            problems.push(format!("train: {e}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(format!("invalid config: {}", problems.join("; "))))
        }
    }
}
