use std::path::{Path, PathBuf};

use l2lab::checkpoint::{checkpoint_file_name, Checkpoint};
use l2lab::curriculum::{
    checkpoint_of, select, split_corpus, train, CurriculumError, MetricRow, ParallelCorpus, Phase, RunMeta,
    TrainData, TrainState,
};
use l2lab::experiment::{bilingual_tokenizer, l2_start};
use l2lab::model::{init_params, ModelConfig, ModelParams, L1_LANG};
use l2lab::tokenizer::Tokenizer;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;
use crate::run_dir::{RunDir, CHECKPOINT_DIR, CONFIG_FILE, METRICS_FILE, TOKENIZER_DIR};

/// What a finished training command produced.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub final_dev_loss: Option<f64>,
}

struct Prepared {
    tokenizer: Tokenizer,
    params: ModelParams<f32>,
    data: TrainData,
    meta: RunMeta,
}

fn load_init(cfg: &RunConfig, base: &Tokenizer) -> Result<Checkpoint> {
    let path = cfg.init_checkpoint.as_ref().expect("checked");
    let ck = Checkpoint::load(path)?;
    let hash = base.vocab.content_hash();
    if ck.header.vocab_hash != hash {
        return Err(CliError::config(format!(
            "init_checkpoint: vocabulary hash {} does not match tokenizer.dir ({hash})",
            ck.header.vocab_hash
        )));
    }
    log::info!("loaded {} ({} parameters)", path.display(), ck.params.count());
    Ok(ck)
}

fn load_base_tokenizer(cfg: &RunConfig) -> Result<Option<Tokenizer>> {
    cfg.tokenizer.dir.as_deref().map(files::load_tokenizer).transpose()
}

fn check_positions(model: &ModelConfig, cfg: &RunConfig) -> Result<()> {
    if cfg.train.max_len > model.max_positions {
        return Err(CliError::config(format!(
            "train.max_len {} exceeds model.max_positions {}",
            cfg.train.max_len, model.max_positions
        )));
    }
    Ok(())
}

fn prepare_l1(cfg: &RunConfig) -> Result<Prepared> {
    let lines = files::read_sentences(cfg.corpus.mono.as_ref().expect("checked"))?;
    let tokenizer = match load_base_tokenizer(cfg)? {
        Some(t) => t,
        None => Tokenizer::train(&lines, cfg.tokenizer.merges, cfg.tokenizer.cap)?,
    };
    let ids = tokenizer.encode_corpus(&lines);
    let split = split_corpus(ids.len(), cfg.seed)?;
    let model = ModelConfig {
        vocab_size: tokenizer.vocab.len(),
        ..cfg.model.clone()
    };
    check_positions(&model, cfg)?;
    let params = init_params(&model, cfg.seed)?;
    Ok(Prepared {
        data: TrainData::Mono {
            train: select(&ids, &split.train),
            dev: select(&ids, &split.dev),
            lang: L1_LANG,
        },
        meta: RunMeta {
            vocab_hash: tokenizer.vocab.content_hash(),
            l1: cfg.l1.clone(),
            pretrained: false,
        },
        tokenizer,
        params,
    })
}

fn prepare_l2(cfg: &RunConfig) -> Result<Prepared> {
    let corpus = ParallelCorpus::new(
        files::read_lines(cfg.corpus.parallel_l1.as_ref().expect("checked"))?,
        files::read_lines(cfg.corpus.parallel_l2.as_ref().expect("checked"))?,
    )?;
    let base = match load_base_tokenizer(cfg)? {
        Some(t) => t,
        None => Tokenizer::train(&corpus.l1, cfg.tokenizer.merges, cfg.tokenizer.cap)?,
    };
    let init = if cfg.from_scratch {
        None
    } else {
        Some(load_init(cfg, &base)?)
    };
    let (tokenizer, _) = bilingual_tokenizer(&base, &corpus.l2, cfg.tokenizer.l2_merges, cfg.tokenizer.cap)?;
    let params = l2_start(init.as_ref().map(|c| &c.params), &cfg.model, tokenizer.vocab.len(), cfg.seed)?;
    check_positions(&params.config, cfg)?;
    let split = split_corpus(corpus.len(), cfg.seed)?;
    Ok(Prepared {
        data: TrainData::Parallel {
            train: corpus.select(&split.train).encode(&tokenizer),
            dev: corpus.select(&split.dev).encode(&tokenizer),
        },
        meta: RunMeta {
            vocab_hash: tokenizer.vocab.content_hash(),
            l1: cfg.l1.clone(),
            pretrained: !cfg.from_scratch,
        },
        tokenizer,
        params,
    })
}

fn prepare_l1_only(cfg: &RunConfig) -> Result<Prepared> {
    let tokenizer = load_base_tokenizer(cfg)?.expect("checked");
    let ck = load_init(cfg, &tokenizer)?;
    check_positions(&ck.params.config, cfg)?;
    let lines = files::read_sentences(cfg.corpus.parallel_l1.as_ref().expect("checked"))?;
    let ids = tokenizer.encode_corpus(&lines);
    let split = split_corpus(ids.len(), cfg.seed)?;
    Ok(Prepared {
        data: TrainData::Mono {
            train: select(&ids, &split.train),
            dev: select(&ids, &split.dev),
            lang: L1_LANG,
        },
        meta: RunMeta {
            vocab_hash: tokenizer.vocab.content_hash(),
            l1: cfg.l1.clone(),
            pretrained: true,
        },
        tokenizer,
        params: ck.params,
    })
}

pub fn metrics_csv(log: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "step", "split", "loss", "lr", "tokens"])
        .map_err(|e| CliError::runtime(e.to_string()))?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.step.to_string(),
            r.split.as_str().to_string(),
            r.loss.to_string(),
            r.lr.to_string(),
            r.tokens.to_string(),
        ])
        .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

/// Runs one training phase into `<output root>/<run id>`.
pub fn run(cfg: &RunConfig, phase: Phase) -> Result<TrainSummary> {
    run_in(cfg, phase, &cfg.output_root())
}

pub fn run_in(cfg: &RunConfig, phase: Phase, root: &Path) -> Result<TrainSummary> {
    cfg.check_inputs(phase)?;
    let plan = cfg.plan(phase);
    let run_id = cfg.run_id(phase);
    let dir = RunDir::acquire(&root.join(&run_id))?;
    log::info!("run {run_id} in {}", dir.path().display());

    let prepared = match phase {
        Phase::L1 => prepare_l1(cfg)?,
        Phase::L2 => prepare_l2(cfg)?,
        Phase::L1Only => prepare_l1_only(cfg)?,
    };
    log::info!(
        "model has {} parameters, vocabulary {}",
        prepared.params.count(),
        prepared.tokenizer.vocab.len()
    );
    files::save_tokenizer(&dir.join(TOKENIZER_DIR), &prepared.tokenizer)?;
    let mut snapshot = cfg.clone();
    snapshot.phase = Some(phase);
    snapshot.output_root = None;
    snapshot.run_id = Some(run_id.clone());
    files::write_json(&dir.join(CONFIG_FILE), &snapshot)?;

    let mut checkpoints = Vec::new();
    let outcome = train(&plan, TrainState::fresh(prepared.params), &prepared.data, |state| {
        let path = dir.join(CHECKPOINT_DIR).join(checkpoint_file_name(state.epoch));
        std::fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| CurriculumError::Sink(e.to_string()))?;
        checkpoint_of(state, &plan, &prepared.meta)
            .save(&path)
            .map_err(|e| CurriculumError::Sink(e.to_string()))?;
        log::info!("epoch {}: saved {}", state.epoch, path.display());
        checkpoints.push(path);
        Ok(())
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let dir_path = dir.path().to_path_buf();
            drop(dir);
            return Err(CliError::runtime(format!("{e} (partial run left in {})", dir_path.display())));
        }
    };
    files::write(&dir.join(METRICS_FILE), metrics_csv(&outcome.log)?)?;
    let final_dev_loss = outcome.log.iter().rev().find(|r| r.split.as_str() == "dev").map(|r| r.loss);
    let path = dir.path().to_path_buf();
    dir.finish(&run_id)?;
    Ok(TrainSummary {
        run_id,
        dir: path,
        checkpoints,
        final_dev_loss,
    })
}
