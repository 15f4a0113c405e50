use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointHeader};
use crate::model::{forward_mlm, loss_and_grads, mlm_loss, ModelError, ModelParams, Mode, RowGrads, L1_LANG, L2_LANG};
use crate::rng::{self, Stream};
use crate::tensor::{clip_global_norm, AdamState, Tensor, TensorError};
use crate::tokenizer::PAD_ID;

use super::data::{epoch_order, make_l2_stream_with_parity, make_mono_stream, token_batches, AlignedIds, Example};
use super::{mask_batch, CurriculumError, Phase, Regime, TrainPlan};

/// Training inputs for one phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainData {
    /// One language, one sentence per example.
    Mono {
        train: Vec<Vec<u32>>,
        dev: Vec<Vec<u32>>,
        lang: u32,
    },
    /// Line-aligned L1/L2 text for the L2 regimes.
    Parallel { train: AlignedIds, dev: AlignedIds },
}

impl TrainData {
    /// The L1 side of a parallel corpus as single-language data.
    pub fn l1_side(train: &AlignedIds, dev: &AlignedIds) -> Self {
        TrainData::Mono {
            train: train.l1.clone(),
            dev: dev.l1.clone(),
            lang: L1_LANG,
        }
    }

    fn examples(&self, plan: &TrainPlan, epoch: u32, dev: bool) -> Result<Vec<Example>, CurriculumError> {
        match (self, plan.phase) {
            (TrainData::Mono { train, dev: d, lang }, Phase::L1 | Phase::L1Only) => {
                Ok(make_mono_stream(if dev { d } else { train }, *lang, plan.max_len))
            }
            (TrainData::Parallel { train, dev: d }, Phase::L2) => make_l2_stream_with_parity(
                if dev { d } else { train },
                plan.regime,
                epoch,
                plan.seed,
                plan.max_len,
                plan.drop_odd_bilingual,
            ),
            _ => Err(CurriculumError::Config(format!(
                "phase {} does not match the kind of training data",
                plan.phase
            ))),
        }
    }
}

/// Parameters, optimizer moments and the number of completed epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
    pub epoch: u32,
}

impl TrainState {
    pub fn fresh(params: ModelParams<f32>) -> Self {
        let adam = AdamState::new(&params.tensors);
        Self { params, adam, epoch: 0 }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, CurriculumError> {
        let adam = ck
            .adam
            .ok_or_else(|| CurriculumError::Config("checkpoint has no optimizer state to resume from".into()))?;
        Ok(Self {
            params: ck.params,
            adam,
            epoch: ck.header.epoch,
        })
    }
}

/// Identity of a run, stored in its checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub vocab_hash: String,
    pub l1: Option<String>,
    pub pretrained: bool,
}

pub fn checkpoint_of(state: &TrainState, plan: &TrainPlan, meta: &RunMeta) -> Checkpoint {
    Checkpoint {
        header: CheckpointHeader {
            model: state.params.config.clone(),
            vocab_hash: meta.vocab_hash.clone(),
            epoch: state.epoch,
            seed: plan.seed,
            phase: plan.phase,
            regime: plan.regime,
            optimizer_step: state.adam.step,
            param_count: state.params.count(),
            l1: meta.l1.clone(),
            pretrained: meta.pretrained,
        },
        params: state.params.clone(),
        adam: Some(state.adam.clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// One row per optimizer update.
    Train,
    /// Prediction-weighted mean over an epoch's micro-batches.
    TrainEpoch,
    Dev,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TrainEpoch => "train_epoch",
            Split::Dev => "dev",
        }
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: u32,
    pub step: u64,
    pub split: Split,
    pub loss: f64,
    pub lr: f64,
    pub tokens: usize,
}

/// Composition of one micro-batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: u32,
    pub index: usize,
    /// Optimizer updates completed when this micro-batch was drawn.
    pub step: u64,
    /// `(line, partner)` of every example.
    pub examples: Vec<(usize, Option<usize>)>,
    pub bilingual_rows: usize,
    pub has_l1: bool,
    pub has_l2: bool,
    /// Non-pad tokens, sentence markers included.
    pub tokens: usize,
    /// Tokens excluding sentence markers.
    pub content_tokens: usize,
    pub predictions: usize,
    pub loss: f64,
}

impl BatchRecord {
    pub fn rows(&self) -> usize {
        self.examples.len()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<MetricRow>,
    pub batches: Vec<BatchRecord>,
}

fn diverged(epoch: u32, step: u64, detail: impl ToString) -> CurriculumError {
    CurriculumError::Diverged {
        epoch,
        step,
        detail: detail.to_string(),
    }
}

fn model_err(epoch: u32, step: u64, e: ModelError) -> CurriculumError {
    match e {
        ModelError::Tensor(t @ TensorError::NonFinite(_)) => diverged(epoch, step, t),
        other => CurriculumError::Model(other),
    }
}

/// Masked-LM loss on the dev examples with masks that do not change
/// between epochs. `None` when the dev set is empty.
fn dev_loss(
    params: &ModelParams<f32>,
    examples: &[Example],
    plan: &TrainPlan,
) -> Result<Option<(f64, usize)>, ModelError> {
    if examples.is_empty() {
        return Ok(None);
    }
    let lengths: Vec<usize> = examples.iter().map(|e| e.seq.len()).collect();
    let order: Vec<usize> = (0..examples.len()).collect();
    let mut total = 0.0;
    let mut count = 0;
    let mut tokens = 0;
    for (b, idx) in token_batches(&lengths, &order, plan.token_budget).iter().enumerate() {
        let seqs: Vec<_> = idx.iter().map(|&i| examples[i].seq.clone()).collect();
        let key = rng::key(plan.seed, Stream::Mask, &[u64::MAX, b as u64]);
        let (batch, _) = mask_batch(&seqs, &plan.masking, params.config.vocab_size, key)?;
        tokens += batch.tokens();
        let logits = forward_mlm(params, &batch, Mode::Eval)?;
        let out = mlm_loss(&logits, &batch.targets())?;
        total += out.loss * out.predictions as f64;
        count += out.predictions;
    }
    Ok(Some((if count == 0 { 0.0 } else { total / count as f64 }, tokens)))
}

fn describe(epoch: u32, index: usize, step: u64, examples: &[&Example]) -> BatchRecord {
    let mut rec = BatchRecord {
        epoch,
        index,
        step,
        examples: examples.iter().map(|e| (e.line, e.partner)).collect(),
        bilingual_rows: examples.iter().filter(|e| e.bilingual()).count(),
        has_l1: false,
        has_l2: false,
        tokens: 0,
        content_tokens: 0,
        predictions: 0,
        loss: 0.0,
    };
    for e in examples {
        for (&id, &lang) in e.seq.ids.iter().zip(&e.seq.langs) {
            if id == PAD_ID {
                continue;
            }
            rec.has_l1 |= lang == L1_LANG;
            rec.has_l2 |= lang == L2_LANG;
            rec.tokens += 1;
        }
        rec.content_tokens += e.seq.len() - 2 * e.seq.segments();
    }
    rec
}

/// Runs the epochs after `state.epoch` up to `plan.epochs`.
///
/// `on_checkpoint` is called with the state after every scheduled epoch. On
/// divergence an error is returned; anything the callback already persisted
/// is left in place.
pub fn train<F>(
    plan: &TrainPlan,
    mut state: TrainState,
    data: &TrainData,
    mut on_checkpoint: F,
) -> Result<TrainOutcome, CurriculumError>
where
    F: FnMut(&TrainState) -> Result<(), CurriculumError>,
{
    plan.validate()?;
    if plan.phase == Phase::L2 && plan.regime == Regime::Mono {
        return Err(CurriculumError::Regime(plan.regime));
    }
    let vocab = state.params.config.vocab_size;
    let schedule = plan.schedule();
    let mut log = Vec::new();
    let mut records = Vec::new();
    let mut last_lr = 0.0;

    let dev_examples = data.examples(plan, 1, true)?;
    if state.epoch == 0 {
        if let Some((loss, tokens)) = dev_loss(&state.params, &dev_examples, plan)? {
            log.push(MetricRow {
                epoch: 0,
                step: 0,
                split: Split::Dev,
                loss,
                lr: 0.0,
                tokens,
            });
        }
    }

    for epoch in state.epoch + 1..=plan.epochs {
        let examples = data.examples(plan, epoch, false)?;
        let truncated = examples.iter().filter(|e| e.truncated).count();
        if truncated > 0 {
            log::info!("epoch {epoch}: {truncated} segments truncated to {} units", plan.max_len);
        }
        let order = epoch_order(examples.len(), plan.seed, epoch);
        let lengths: Vec<usize> = examples.iter().map(|e| e.seq.len()).collect();
        let batches = token_batches(&lengths, &order, plan.token_budget);

        let mut acc: Option<RowGrads<f32>> = None;
        let mut acc_count = 0;
        let (mut win_loss, mut win_preds, mut win_tokens) = (0.0, 0usize, 0usize);
        let (mut ep_loss, mut ep_preds, mut ep_tokens) = (0.0, 0usize, 0usize);

        for (b, idx) in batches.iter().enumerate() {
            let members: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let seqs: Vec<_> = members.iter().map(|e| e.seq.clone()).collect();
            let mkey = rng::key(plan.seed, Stream::Mask, &[epoch as u64, b as u64]);
            let (batch, _) = mask_batch(&seqs, &plan.masking, vocab, mkey)?;
            let dkey = rng::key(plan.seed, Stream::Dropout, &[epoch as u64, b as u64]);
            let (out, grads) = loss_and_grads(&state.params, &batch, Mode::Train { key: dkey })
                .map_err(|e| model_err(epoch, state.adam.step, e))?;
            if !out.loss.is_finite() {
                return Err(diverged(epoch, state.adam.step, "non-finite loss"));
            }

            let mut rec = describe(epoch, b, state.adam.step, &members);
            rec.predictions = out.predictions;
            rec.loss = out.loss;
            records.push(rec);

            win_loss += out.loss * out.predictions as f64;
            win_preds += out.predictions;
            win_tokens += batch.tokens();
            match acc.as_mut() {
                None => acc = Some(grads),
                Some(a) => {
                    for (x, g) in a.iter_mut().zip(&grads) {
                        x.add_assign(g);
                    }
                }
            }
            acc_count += 1;

            if acc_count == plan.accumulate || b + 1 == batches.len() {
                let mut grads: Vec<Tensor<f32>> = acc.take().expect("accumulated gradients");
                clip_global_norm(&mut grads, plan.clip_norm);
                let lr = state
                    .adam
                    .step(&plan.adam, &mut state.params.tensors, &grads)
                    .map_err(|e| diverged(epoch, state.adam.step, e))?;
                if !state.params.is_finite() {
                    return Err(diverged(epoch, state.adam.step, "non-finite parameters after update"));
                }
                last_lr = lr;
                let loss = if win_preds == 0 { 0.0 } else { win_loss / win_preds as f64 };
                log.push(MetricRow {
                    epoch,
                    step: state.adam.step,
                    split: Split::Train,
                    loss,
                    lr,
                    tokens: win_tokens,
                });
                ep_loss += win_loss;
                ep_preds += win_preds;
                ep_tokens += win_tokens;
                win_loss = 0.0;
                win_preds = 0;
                win_tokens = 0;
                acc_count = 0;
            }
        }

        log.push(MetricRow {
            epoch,
            step: state.adam.step,
            split: Split::TrainEpoch,
            loss: if ep_preds == 0 { 0.0 } else { ep_loss / ep_preds as f64 },
            lr: last_lr,
            tokens: ep_tokens,
        });
        if let Some((loss, tokens)) = dev_loss(&state.params, &dev_examples, plan)? {
            log.push(MetricRow {
                epoch,
                step: state.adam.step,
                split: Split::Dev,
                loss,
                lr: last_lr,
                tokens,
            });
        }
        state.epoch = epoch;
        if schedule.binary_search(&epoch).is_ok() {
            on_checkpoint(&state)?;
        }
    }

    Ok(TrainOutcome {
        state,
        log,
        batches: records,
    })
}
