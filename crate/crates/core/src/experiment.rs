//! The L1-then-L2 pipeline on in-memory corpora, and a desk-scale recipe over
//! the synthetic languages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{
    split_corpus, train, CurriculumError, MetricRow, ParallelCorpus, Phase, Regime, TrainData, TrainPlan, TrainState,
};
use crate::eval::{evaluate, EvalError, EvalReport, ModelScorer, ReportMeta, TestSuite};
use crate::model::{extend_for_l2, init_params, ModelConfig, ModelError, ModelParams, L1_LANG, L2_LANG};
use crate::synth::{SynthConfig, SynthLang, SynthWorld};
use crate::tensor::AdamConfig;
use crate::tokenizer::{extend_bilingual, Tokenizer, TokenizerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The L1 tokenizer extended with L2 merges and subwords. Returns the
/// extended tokenizer and the size of the L1 vocabulary it grew from.
pub fn bilingual_tokenizer<S: AsRef<str>>(
    l1: &Tokenizer,
    l2_lines: &[S],
    merges: usize,
    cap: usize,
) -> Result<(Tokenizer, usize), TokenizerError> {
    let (codes, ext) = extend_bilingual(&l1.codes, &l1.vocab, l2_lines, merges, cap)?;
    Ok((Tokenizer::new(codes, ext.vocab), ext.base_size))
}

/// Starting parameters for L2 exposure: the pretrained model grown to the
/// bilingual vocabulary, or a fresh model of the same shape.
pub fn l2_start(
    pretrained: Option<&ModelParams<f32>>,
    template: &ModelConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<ModelParams<f32>, ModelError> {
    match pretrained {
        Some(p) => extend_for_l2(p, p.config.vocab_size, vocab_size, seed),
        None => init_params(
            &ModelConfig {
                vocab_size,
                ..template.clone()
            },
            seed,
        ),
    }
}

/// Trains a fresh model on one language split 8:1:1 by `plan.seed`.
pub fn train_mono(
    plan: &TrainPlan,
    config: &ModelConfig,
    ids: &[Vec<u32>],
    lang: u32,
) -> Result<(ModelParams<f32>, Vec<MetricRow>), ExperimentError> {
    let split = split_corpus(ids.len(), plan.seed)?;
    let data = TrainData::Mono {
        train: crate::curriculum::select(ids, &split.train),
        dev: crate::curriculum::select(ids, &split.dev),
        lang,
    };
    let params = init_params(config, plan.seed)?;
    let out = train(plan, TrainState::fresh(params), &data, |_| Ok(()))?;
    Ok((out.state.params, out.log))
}

/// L2 exposure from `params` on a parallel corpus split 8:1:1 by `plan.seed`.
pub fn train_parallel(
    plan: &TrainPlan,
    params: ModelParams<f32>,
    tokenizer: &Tokenizer,
    corpus: &ParallelCorpus,
) -> Result<(ModelParams<f32>, Vec<MetricRow>), ExperimentError> {
    let split = split_corpus(corpus.len(), plan.seed)?;
    let data = TrainData::Parallel {
        train: corpus.select(&split.train).encode(tokenizer),
        dev: corpus.select(&split.dev).encode(tokenizer),
    };
    let out = train(plan, TrainState::fresh(params), &data, |_| Ok(()))?;
    Ok((out.state.params, out.log))
}

/// Evaluates single L2 sentences.
pub fn evaluate_l2(
    params: &ModelParams<f32>,
    tokenizer: &Tokenizer,
    suites: &[TestSuite],
    meta: ReportMeta,
) -> Result<EvalReport, EvalError> {
    let scorer = ModelScorer {
        params,
        tokenizer,
        lang: L2_LANG,
    };
    evaluate(&scorer, suites, meta)
}

/// Desk-scale comparison of drop-regime L2 training with and without L1
/// pretraining on the synthetic languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskRecipe {
    pub world_seed: u64,
    pub l1_sentences: usize,
    pub parallel_pairs: usize,
    pub suite_pairs: usize,
    pub merges: usize,
    pub vocab_cap: usize,
    pub model: ModelConfig,
    pub l1_epochs: u32,
    pub l2_epochs: u32,
    pub lr: f64,
    pub warmup_steps: u64,
    pub token_budget: usize,
    pub accumulate: usize,
}

impl Default for DeskRecipe {
    fn default() -> Self {
        Self {
            world_seed: 2024,
            l1_sentences: 5000,
            parallel_pairs: 2500,
            suite_pairs: 1000,
            merges: 200,
            vocab_cap: 1000,
            model: ModelConfig {
                dropout: 0.1,
                attention_dropout: 0.1,
                max_positions: 64,
                ..ModelConfig::desk(0)
            },
            l1_epochs: 5,
            l2_epochs: 4,
            lr: 1e-3,
            warmup_steps: 100,
            token_budget: 512,
            accumulate: 1,
        }
    }
}

impl DeskRecipe {
    pub fn world(&self) -> SynthWorld {
        SynthWorld::new(SynthConfig::default(), self.world_seed)
    }

    pub fn plan(&self, phase: Phase, regime: Regime, epochs: u32, seed: u64) -> TrainPlan {
        TrainPlan {
            phase,
            regime,
            epochs,
            checkpoint_epochs: vec![epochs],
            seed,
            adam: AdamConfig {
                lr: self.lr,
                warmup_steps: self.warmup_steps,
                ..AdamConfig::default()
            },
            accumulate: self.accumulate,
            token_budget: self.token_budget,
            max_len: self.model.max_positions / 2,
            ..TrainPlan::default()
        }
    }
}

/// Reports of one seed of the desk recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskRun {
    pub seed: u64,
    pub pretrained: EvalReport,
    pub scratch: EvalReport,
    pub l1_log: Vec<MetricRow>,
    pub pretrained_log: Vec<MetricRow>,
    pub scratch_log: Vec<MetricRow>,
}

pub fn run_desk(recipe: &DeskRecipe, seed: u64) -> Result<DeskRun, ExperimentError> {
    let world = recipe.world();
    let l1_lines = world.mono(SynthLang::L1, recipe.l1_sentences);
    let (p1, p2) = world.parallel(recipe.parallel_pairs);
    let corpus = ParallelCorpus::new(p1, p2)?;
    let suites = world.l2_suites(recipe.suite_pairs);

    let l1_tok = Tokenizer::train(&l1_lines, recipe.merges, recipe.vocab_cap)?;
    let (tok, base) = bilingual_tokenizer(&l1_tok, &corpus.l2, recipe.merges, recipe.vocab_cap)?;

    let l1_cfg = ModelConfig {
        vocab_size: base,
        ..recipe.model.clone()
    };
    let l1_plan = recipe.plan(Phase::L1, Regime::Mono, recipe.l1_epochs, seed);
    let (l1_params, l1_log) = train_mono(&l1_plan, &l1_cfg, &l1_tok.encode_corpus(&l1_lines), L1_LANG)?;

    let l2_plan = recipe.plan(Phase::L2, Regime::Drop, recipe.l2_epochs, seed);
    let mut reports = Vec::new();
    let mut logs = Vec::new();
    for pretrained in [Some(&l1_params), None] {
        let start = l2_start(pretrained, &recipe.model, tok.vocab.len(), seed)?;
        let (params, log) = train_parallel(&l2_plan, start, &tok, &corpus)?;
        let meta = ReportMeta {
            model: format!("desk-{}", if pretrained.is_some() { "l1" } else { "scratch" }),
            seed: Some(seed),
            epoch: Some(recipe.l2_epochs),
            regime: Some(Regime::Drop.to_string()),
            l1: Some("L1'".into()),
            pretrained: Some(pretrained.is_some()),
            ..ReportMeta::default()
        };
        reports.push(evaluate_l2(&params, &tok, &suites, meta)?);
        logs.push(log);
    }
    let scratch_log = logs.pop().expect("two runs");
    let pretrained_log = logs.pop().expect("two runs");
    let scratch = reports.pop().expect("two runs");
    let pretrained = reports.pop().expect("two runs");
    Ok(DeskRun {
        seed,
        pretrained,
        scratch,
        l1_log,
        pretrained_log,
        scratch_log,
    })
}
