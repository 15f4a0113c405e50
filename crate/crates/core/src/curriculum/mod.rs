//! Corpus splitting, masking, the L2 exposure regimes and the training loop.

mod data;
mod masking;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::tensor::AdamConfig;

pub use data::{
    drop_epoch_is_bilingual, epoch_order, make_l2_stream, make_l2_stream_with_parity, make_mono_stream,
    nopara_permutation, select, split_corpus, token_batches, AlignedIds, CorpusSplit, Example, ParallelCorpus,
};
pub use masking::{mask_batch, mask_sequence, MaskStats, MaskingConfig};
pub use train::{
    checkpoint_of, train, BatchRecord, MetricRow, RunMeta, Split, TrainData, TrainOutcome, TrainState,
};

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("corpus has {0} lines; at least 10 are needed for an 8:1:1 split")]
    TooSmall(usize),
    #[error("parallel corpus sides differ in length ({l1} vs {l2} lines)")]
    Misaligned { l1: usize, l2: usize },
    #[error("empty line {line} on the {side} side")]
    EmptyLine { side: &'static str, line: usize },
    #[error("regime {0} is not valid here")]
    Regime(Regime),
    #[error("invalid training plan: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged { epoch: u32, step: u64, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint sink failed: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    L1,
    L2,
    L1Only,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Mono,
    Para,
    Nopara,
    Drop,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Mono => "mono",
            Regime::Para => "para",
            Regime::Nopara => "nopara",
            Regime::Drop => "drop",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mono" => Ok(Regime::Mono),
            "para" => Ok(Regime::Para),
            "nopara" => Ok(Regime::Nopara),
            "drop" => Ok(Regime::Drop),
            other => Err(format!("unknown regime {other:?} (expected mono, para, nopara or drop)")),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::L1 => "l1",
            Phase::L2 => "l2",
            Phase::L1Only => "l1-only",
        })
    }
}

pub const DEFAULT_CHECKPOINT_EPOCHS: [u32; 11] = [1, 2, 3, 4, 5, 10, 20, 30, 40, 50, 100];

/// Everything that determines a training run besides its data and
/// starting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub phase: Phase,
    pub regime: Regime,
    pub epochs: u32,
    pub checkpoint_epochs: Vec<u32>,
    pub seed: u64,
    pub masking: MaskingConfig,
    pub adam: AdamConfig,
    /// Micro-batches whose gradients are summed into one update.
    pub accumulate: usize,
    pub clip_norm: f64,
    /// Token budget of one micro-batch.
    pub token_budget: usize,
    /// Longest segment, including its BOS and EOS.
    pub max_len: usize,
    /// Drop regime: odd epochs are bilingual when true, even epochs otherwise.
    pub drop_odd_bilingual: bool,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            phase: Phase::L1,
            regime: Regime::Mono,
            epochs: 100,
            checkpoint_epochs: DEFAULT_CHECKPOINT_EPOCHS.to_vec(),
            seed: 0,
            masking: MaskingConfig::default(),
            adam: AdamConfig::default(),
            accumulate: 4,
            clip_norm: 1.0,
            token_budget: 2048,
            max_len: 256,
            drop_odd_bilingual: true,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let mut problems = Vec::new();
        if let Some(e) = self.checkpoint_epochs.iter().find(|&&e| e == 0 || e > self.epochs) {
            problems.push(format!("checkpoint epoch {e} outside 1..={}", self.epochs));
        }
        match (self.phase, self.regime) {
            (Phase::L2, Regime::Mono) => problems.push("phase l2 needs regime para, nopara or drop".into()),
            (Phase::L1 | Phase::L1Only, r) if r != Regime::Mono => {
                problems.push(format!("phase {} only supports regime mono, not {r}", self.phase))
            }
            _ => {}
        }
        if self.accumulate == 0 {
            problems.push("accumulate must be at least 1".into());
        }
        if self.token_budget == 0 {
            problems.push("token_budget must be positive".into());
        }
        if self.max_len < 3 {
            problems.push("max_len must be at least 3".into());
        }
        if self.adam.warmup_steps == 0 {
            problems.push("warmup_steps must be at least 1".into());
        }
        if !(self.clip_norm > 0.0) {
            problems.push("clip_norm must be positive".into());
        }
        if let Err(e) = self.masking.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CurriculumError::Config(problems.join("; ")))
        }
    }

    /// Scheduled checkpoint epochs, sorted and without duplicates.
    pub fn schedule(&self) -> Vec<u32> {
        let mut s = self.checkpoint_epochs.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}
