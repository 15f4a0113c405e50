//! Multi-run experiment plans: every L1 × seed gets an L1 run, and every
//! regime gets an L2 run from that checkpoint and one from scratch. Final
//! checkpoints are scored and the report tables rendered at the end.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use l2lab::curriculum::{Phase, Regime};
use l2lab::model::ModelConfig;

use crate::commands::eval::{self, EvalConfig, EvalLang};
use crate::commands::{report, train};
use crate::config::{CorpusConfig, RunConfig, TokenizerConfig, TrainConfig, CONFIG_VERSION, OUTPUT_ROOT_ENV};
use crate::error::{CliError, Result};
use crate::files;
use crate::run_dir::{MANIFEST_FILE, TOKENIZER_DIR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L1Corpora {
    pub label: String,
    pub mono: PathBuf,
    pub parallel_l1: PathBuf,
    pub parallel_l2: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecipe {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub output_root: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub regimes: Vec<Regime>,
    pub l1s: Vec<L1Corpora>,
    pub suites: PathBuf,
    #[serde(default)]
    pub mapping: Option<PathBuf>,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub l1_train: TrainConfig,
    #[serde(default)]
    pub l2_train: TrainConfig,
    /// Regime whose pretrained/scratch pairs make up the gain tables.
    #[serde(default = "default_delta_regime")]
    pub delta_regime: Regime,
}

fn default_delta_regime() -> Regime {
    Regime::Drop
}

fn safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl ExperimentRecipe {
    pub fn load(path: &Path) -> Result<Self> {
        files::require_exists("--config", path)?;
        let mut r: ExperimentRecipe = files::read_json(path)?;
        if r.version != CONFIG_VERSION {
            return Err(CliError::config(format!("version: expected {CONFIG_VERSION}, found {}", r.version)));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| *p = files::resolve(base, p);
        for l in &mut r.l1s {
            fix(&mut l.mono);
            fix(&mut l.parallel_l1);
            fix(&mut l.parallel_l2);
        }
        fix(&mut r.suites);
        if let Some(m) = r.mapping.as_mut() {
            fix(m);
        }
        if let Some(o) = r.output_root.as_mut() {
            fix(o);
        }
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.seeds.is_empty() {
            problems.push("seeds must not be empty".to_string());
        }
        if self.l1s.is_empty() {
            problems.push("l1s must not be empty".to_string());
        }
        if self.regimes.iter().any(|r| *r == Regime::Mono) {
            problems.push("regimes: mono is not an L2 regime".to_string());
        }
        let mut ids = BTreeSet::new();
        for (i, l) in self.l1s.iter().enumerate() {
            if !ids.insert(safe(&l.label)) {
                problems.push(format!("l1s[{i}].label {:?} is not unique", l.label));
            }
            for (key, p) in [("mono", &l.mono), ("parallel_l1", &l.parallel_l1), ("parallel_l2", &l.parallel_l2)] {
                if !p.exists() {
                    problems.push(format!("l1s[{i}].{key}: {} does not exist", p.display()));
                }
            }
        }
        if !self.suites.exists() {
            problems.push(format!("suites: {} does not exist", self.suites.display()));
        }
        if let Some(m) = self.mapping.as_ref().filter(|m| !m.exists()) {
            problems.push(format!("mapping: {} does not exist", m.display()));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(format!("invalid recipe: {}", problems.join("; "))))
        }
    }

    fn root(&self) -> PathBuf {
        let base = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_root.clone())
            .unwrap_or_else(|| PathBuf::from("runs"));
        base.join(safe(&self.name))
    }

    fn run_config(&self, l1: &L1Corpora, seed: u64) -> RunConfig {
        RunConfig {
            version: CONFIG_VERSION,
            run_id: None,
            output_root: None,
            seed,
            l1: Some(l1.label.clone()),
            corpus: CorpusConfig {
                mono: Some(l1.mono.clone()),
                parallel_l1: Some(l1.parallel_l1.clone()),
                parallel_l2: Some(l1.parallel_l2.clone()),
            },
            tokenizer: self.tokenizer.clone(),
            model: self.model.clone(),
            train: self.l1_train.clone(),
            init_checkpoint: None,
            from_scratch: false,
            phase: None,
        }
    }
}

fn last_checkpoint(run: &Path) -> Result<PathBuf> {
    eval::run_checkpoints(run)?
        .pop()
        .ok_or_else(|| CliError::runtime(format!("{} has no checkpoints", run.display())))
}

/// Trains the run unless a finished one is already there; returns its directory.
fn ensure_run(cfg: &RunConfig, phase: Phase, root: &Path) -> Result<PathBuf> {
    let dir = root.join(cfg.run_id(phase));
    if dir.join(MANIFEST_FILE).exists() {
        log::info!("reusing finished run {}", dir.display());
        return Ok(dir);
    }
    Ok(train::run_in(cfg, phase, root)?.dir)
}

pub fn run(recipe: &ExperimentRecipe) -> Result<String> {
    recipe.validate()?;
    let root = recipe.root();
    let runs = root.join("runs");
    let mut finals: Vec<PathBuf> = Vec::new();
    for l1 in &recipe.l1s {
        for &seed in &recipe.seeds {
            let mut base = recipe.run_config(l1, seed);
            base.run_id = Some(format!("l1-{}-s{seed}", safe(&l1.label)));
            let l1_dir = ensure_run(&base, Phase::L1, &runs)?;
            let l1_ckpt = last_checkpoint(&l1_dir)?;
            for &regime in &recipe.regimes {
                for scratch in [false, true] {
                    let mut cfg = recipe.run_config(l1, seed);
                    cfg.train = TrainConfig {
                        regime: Some(regime),
                        ..recipe.l2_train.clone()
                    };
                    cfg.tokenizer.dir = Some(l1_dir.join(TOKENIZER_DIR));
                    cfg.from_scratch = scratch;
                    cfg.init_checkpoint = (!scratch).then(|| l1_ckpt.clone());
                    cfg.run_id = Some(format!(
                        "l2-{}-{regime}-{}-s{seed}",
                        safe(&l1.label),
                        if scratch { "scratch" } else { "pretrained" }
                    ));
                    let dir = ensure_run(&cfg, Phase::L2, &runs)?;
                    finals.push(dir);
                }
            }
        }
    }
    let eval_dir = root.join("eval");
    for run in &finals {
        let cfg = EvalConfig {
            checkpoints: vec![last_checkpoint(run)?],
            tokenizer: run.join(TOKENIZER_DIR),
            suites: recipe.suites.clone(),
            mapping: recipe.mapping.clone(),
            lang: EvalLang::L2,
        };
        let name = run.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        eval::run(&cfg, &eval_dir.join(name))?;
    }
    let summary = report::run(&[eval_dir], &root.join("report"), &recipe.delta_regime.to_string())?;
    Ok(summary)
}
