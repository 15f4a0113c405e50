use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use l2lab::checkpoint::Checkpoint;
use l2lab::curriculum::Phase;
use l2lab::eval::{evaluate, load_suite_dir, trajectory, CategoryMap, EvalReport, ModelScorer, ReportMeta};
use l2lab::model::{L1_LANG, L2_LANG};
use l2lab::report::{report_csv, trajectory_csv};
use l2lab::tokenizer::Tokenizer;

use crate::error::{CliError, Result};
use crate::files;
use crate::run_dir::{CHECKPOINT_DIR, TOKENIZER_DIR};

pub const REPORTS_DIR: &str = "reports";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVAL_CONFIG_FILE: &str = "eval_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalLang {
    L1,
    L2,
}

/// Resolved inputs of an evaluation, saved next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub checkpoints: Vec<PathBuf>,
    pub tokenizer: PathBuf,
    pub suites: PathBuf,
    pub mapping: Option<PathBuf>,
    pub lang: EvalLang,
}

/// Checkpoints of a run directory in epoch order.
pub fn run_checkpoints(run: &Path) -> Result<Vec<PathBuf>> {
    let dir = run.join(CHECKPOINT_DIR);
    let mut out: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(CliError::config(format!("{} has no checkpoints", dir.display())));
    }
    Ok(out)
}

/// `<run>/tokenizer` for a checkpoint stored as `<run>/checkpoints/x.ckpt`.
pub fn tokenizer_of(checkpoint: &Path) -> Option<PathBuf> {
    let run = checkpoint.parent()?.parent()?;
    let dir = run.join(TOKENIZER_DIR);
    dir.exists().then_some(dir)
}

fn run_name(checkpoint: &Path) -> String {
    let parent = checkpoint.parent();
    match parent.and_then(|p| p.file_name()) {
        Some(n) if n == CHECKPOINT_DIR => parent
            .and_then(Path::parent)
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        _ => String::new(),
    }
}

fn label(checkpoint: &Path) -> String {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match run_name(checkpoint) {
        r if r.is_empty() => stem,
        r => format!("{r}.{stem}"),
    }
}

fn meta_of(ck: &Checkpoint, path: &Path) -> ReportMeta {
    let h = &ck.header;
    let name = run_name(path);
    ReportMeta {
        model: if name.is_empty() { label(path) } else { name },
        checkpoint: Some(label(path)),
        epoch: Some(h.epoch),
        seed: Some(h.seed),
        l1: h.l1.clone(),
        regime: Some(match h.phase {
            Phase::L2 => h.regime.to_string(),
            other => other.to_string(),
        }),
        pretrained: Some(h.pretrained),
        ..ReportMeta::default()
    }
}

pub struct EvalOutput {
    pub reports: Vec<(PathBuf, EvalReport)>,
}

pub fn run(cfg: &EvalConfig, out: &Path) -> Result<EvalOutput> {
    if cfg.checkpoints.is_empty() {
        return Err(CliError::config("no checkpoints given"));
    }
    files::require_exists("--suites", &cfg.suites)?;
    let map = match &cfg.mapping {
        Some(p) => {
            files::require_exists("--mapping", p)?;
            CategoryMap::load(p)?
        }
        None => CategoryMap::default(),
    };
    let suites = load_suite_dir(&cfg.suites, &map)?;
    let tokenizer: Tokenizer = files::load_tokenizer(&cfg.tokenizer)?;
    let hash = tokenizer.vocab.content_hash();
    let lang = match cfg.lang {
        EvalLang::L1 => L1_LANG,
        EvalLang::L2 => L2_LANG,
    };

    files::write_json(&out.join(EVAL_CONFIG_FILE), cfg)?;
    let mut reports = Vec::new();
    let mut by_run: BTreeMap<String, Vec<(u32, EvalReport)>> = BTreeMap::new();
    for path in &cfg.checkpoints {
        let ck = Checkpoint::load(path)?;
        if ck.header.vocab_hash != hash {
            return Err(CliError::config(format!(
                "{}: vocabulary hash {} does not match tokenizer {} ({hash}); refusing to score with a different vocabulary",
                path.display(),
                ck.header.vocab_hash,
                cfg.tokenizer.display()
            )));
        }
        log::info!("scoring {} ({} parameters)", path.display(), ck.params.count());
        let scorer = ModelScorer {
            params: &ck.params,
            tokenizer: &tokenizer,
            lang,
        };
        let report = evaluate(&scorer, &suites, meta_of(&ck, path))?;
        let stem = label(path);
        let json = out.join(REPORTS_DIR).join(format!("{stem}.json"));
        files::write_json(&json, &report)?;
        files::write(&out.join(REPORTS_DIR).join(format!("{stem}.csv")), report_csv(&report))?;
        println!("{stem}: overall {:.1}", report.overall);
        by_run
            .entry(report.meta.model.clone())
            .or_default()
            .push((ck.header.epoch, report.clone()));
        reports.push((json, report));
    }
    let series = by_run
        .into_iter()
        .map(|(name, points)| Ok((name, trajectory(points)?)))
        .collect::<Result<Vec<_>>>()?;
    files::write(&out.join(TRAJECTORY_FILE), trajectory_csv(&series))?;
    Ok(EvalOutput { reports })
}
