use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::rng::{self, Stream};
use crate::tensor::{log_softmax_at, Real, Tape, Tensor, Var};
use crate::tokenizer::{MASK_ID, PAD_ID};

use super::{layer_base, Batch, BatchRow, ModelError, ModelParams, Sequence};
use super::{EMB_LN_B, EMB_LN_G, LANG_EMB, LN_EPS, POS_EMB, TOK_EMB};

/// Forward-pass mode. Dropout only runs in `Train`, where every row draws
/// its mask from a stream keyed on `key` and the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { key: u64 },
}

impl Mode {
    fn row_rng(self, row: usize) -> Option<ChaCha8Rng> {
        match self {
            Mode::Eval => None,
            Mode::Train { key } => Some(ChaCha8Rng::seed_from_u64(rng::key(key, Stream::Dropout, &[row as u64]))),
        }
    }
}

/// Rows per work unit in `loss_and_grads`. Gradients are summed inside a
/// chunk, then across chunks, always in row order.
const CHUNK: usize = 8;

fn dropout<T: Real>(tape: &mut Tape<'_, T>, x: Var, p: f64, rng: &mut Option<ChaCha8Rng>) -> Result<Var, ModelError> {
    match rng {
        Some(r) if p > 0.0 => Ok(tape.dropout(x, p, r)?),
        _ => Ok(x),
    }
}

/// Runs the encoder over the non-pad columns of one row and returns the
/// logits at the predicted columns.
fn row_logits<'a, T: Real>(
    tape: &mut Tape<'a, T>,
    params: &'a ModelParams<T>,
    row: &BatchRow,
    mut rng: Option<ChaCha8Rng>,
    trainable: bool,
) -> Result<(Vec<Var>, Var), ModelError> {
    let cfg = &params.config;
    let vars: Vec<Var> = params
        .tensors
        .iter()
        .map(|t| if trainable { tape.param(t) } else { tape.frozen(t) })
        .collect();
    let cols = row.attended();
    let seq = &row.seq;
    let ids: Vec<usize> = cols.iter().map(|&c| seq.ids[c] as usize).collect();
    let positions: Vec<usize> = cols.iter().map(|&c| seq.positions[c] as usize).collect();
    let langs: Vec<usize> = cols.iter().map(|&c| seq.langs[c] as usize).collect();

    let tok = tape.embedding(vars[TOK_EMB], &ids)?;
    let pos = tape.embedding(vars[POS_EMB], &positions)?;
    let lang = tape.embedding(vars[LANG_EMB], &langs)?;
    let x = tape.add(tok, pos)?;
    let x = tape.add(x, lang)?;
    let eps = T::of(LN_EPS);
    let x = tape.layer_norm(x, vars[EMB_LN_G], vars[EMB_LN_B], eps)?;
    let mut x = dropout(tape, x, cfg.dropout, &mut rng)?;

    let dh = cfg.head_dim();
    let inv_sqrt_dh = T::of(1.0 / (dh as f64).sqrt());
    for l in 0..cfg.n_layers {
        let b = layer_base(l);
        let q = tape.matmul(x, vars[b])?;
        let q = tape.add_row(q, vars[b + 1])?;
        let k = tape.matmul(x, vars[b + 2])?;
        let k = tape.add_row(k, vars[b + 3])?;
        let v = tape.matmul(x, vars[b + 4])?;
        let v = tape.add_row(v, vars[b + 5])?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, inv_sqrt_dh)?;
            let weights = tape.softmax(scores)?;
            let weights = dropout(tape, weights, cfg.attention_dropout, &mut rng)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let ctx = tape.concat_cols(&heads)?;
        let attn = tape.matmul(ctx, vars[b + 6])?;
        let attn = tape.add_row(attn, vars[b + 7])?;
        let attn = dropout(tape, attn, cfg.dropout, &mut rng)?;
        let res = tape.add(x, attn)?;
        x = tape.layer_norm(res, vars[b + 8], vars[b + 9], eps)?;

        let h = tape.matmul(x, vars[b + 10])?;
        let h = tape.add_row(h, vars[b + 11])?;
        let h = tape.gelu(h)?;
        let h = tape.matmul(h, vars[b + 12])?;
        let h = tape.add_row(h, vars[b + 13])?;
        let h = dropout(tape, h, cfg.dropout, &mut rng)?;
        let res = tape.add(x, h)?;
        x = tape.layer_norm(res, vars[b + 14], vars[b + 15], eps)?;
    }

    let picked: Vec<usize> = row
        .predict
        .iter()
        .map(|c| cols.binary_search(c).expect("predicted column is attended"))
        .collect();
    let hidden = tape.gather_rows(x, &picked)?;
    let logits = tape.matmul_nt(hidden, vars[params.out_weight_index()])?;
    let logits = tape.add_row(logits, vars[params.out_bias_index()])?;
    Ok((vars, logits))
}

fn check_batch<T: Real>(params: &ModelParams<T>, batch: &Batch) -> Result<(), ModelError> {
    batch.validate()?;
    let cfg = &params.config;
    for (r, row) in batch.rows.iter().enumerate() {
        let s = &row.seq;
        for c in row.attended() {
            if s.ids[c] as usize >= cfg.vocab_size
                || s.positions[c] as usize >= cfg.max_positions
                || s.langs[c] as usize >= cfg.n_languages
            {
                return Err(ModelError::Batch(format!(
                    "row {r} column {c}: id {} / position {} / language {} out of range for the model",
                    s.ids[c], s.positions[c], s.langs[c]
                )));
            }
        }
        if let Some(&t) = row.targets.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(ModelError::Batch(format!("row {r}: target {t} outside vocabulary")));
        }
    }
    Ok(())
}

/// Logits `[num_predictions × vocab]`, rows ordered by batch row, then column.
pub fn forward_mlm<T: Real>(params: &ModelParams<T>, batch: &Batch, mode: Mode) -> Result<Tensor<T>, ModelError> {
    check_batch(params, batch)?;
    let v = params.config.vocab_size;
    let per_row: Vec<Vec<T>> = batch
        .rows
        .par_iter()
        .enumerate()
        .map(|(r, row)| {
            if row.predict.is_empty() {
                return Ok(Vec::new());
            }
            let mut tape = Tape::new();
            let (_, logits) = row_logits(&mut tape, params, row, mode.row_rng(r), false)?;
            Ok(tape.value(logits).data().to_vec())
        })
        .collect::<Result<_, ModelError>>()?;
    let data: Vec<T> = per_row.into_iter().flatten().collect();
    let n = data.len() / v;
    Ok(Tensor::from_vec(vec![n, v], data)?)
}

/// Mean masked-LM cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub predictions: usize,
    /// Set when there was nothing to predict; the loss is then 0.
    pub no_targets: bool,
}

pub fn mlm_loss<T: Real>(logits: &Tensor<T>, targets: &[u32]) -> Result<LossOutput, ModelError> {
    let (n, v) = logits.dims2()?;
    if n != targets.len() {
        return Err(ModelError::Batch(format!("{n} logit rows for {} targets", targets.len())));
    }
    if n == 0 {
        return Ok(LossOutput {
            loss: 0.0,
            predictions: 0,
            no_targets: true,
        });
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t as usize >= v {
            return Err(ModelError::Batch(format!("target {t} outside vocabulary of {v}")));
        }
        total -= log_softmax_at(&logits.data()[r * v..(r + 1) * v], t as usize).f64();
    }
    Ok(LossOutput {
        loss: total / n as f64,
        predictions: n,
        no_targets: false,
    })
}

/// Per-parameter gradients in `ModelParams::tensors` order.
pub type RowGrads<T> = Vec<Tensor<T>>;

fn add_grads<T: Real>(acc: &mut RowGrads<T>, other: &RowGrads<T>) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.add_assign(b);
    }
}

/// Mean masked-LM loss of a batch and its gradient with respect to every
/// parameter. Rows run in parallel; the result does not depend on the
/// number of threads.
pub fn loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    batch: &Batch,
    mode: Mode,
) -> Result<(LossOutput, RowGrads<T>), ModelError> {
    check_batch(params, batch)?;
    let total = batch.num_predictions();
    let zero = || -> RowGrads<T> { params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect() };
    if total == 0 {
        return Ok((
            LossOutput {
                loss: 0.0,
                predictions: 0,
                no_targets: true,
            },
            zero(),
        ));
    }
    let inv_total = T::of(1.0 / total as f64);
    let indices: Vec<usize> = (0..batch.rows.len()).collect();
    let chunks: Vec<(f64, RowGrads<T>)> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = zero();
            let mut loss = 0.0;
            for &r in chunk {
                let row = &batch.rows[r];
                if row.predict.is_empty() {
                    continue;
                }
                let mut tape = Tape::new();
                let (vars, logits) = row_logits(&mut tape, params, row, mode.row_rng(r), true)?;
                let targets: Vec<usize> = row.targets.iter().map(|&t| t as usize).collect();
                let ce = tape.cross_entropy_sum(logits, &targets)?;
                let scaled = tape.scale(ce, inv_total)?;
                loss += tape.value(scaled).item().f64();
                let mut g = tape.backward(scaled)?;
                for (acc, &v) in grads.iter_mut().zip(&vars) {
                    if let Some(t) = g.take(v) {
                        acc.add_assign(&t);
                    }
                }
            }
            Ok((loss, grads))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut grads = zero();
    let mut loss = 0.0;
    for (l, g) in &chunks {
        loss += l;
        add_grads(&mut grads, g);
    }
    Ok((
        LossOutput {
            loss,
            predictions: total,
            no_targets: false,
        },
        grads,
    ))
}

/// `log p(w_t | s with position t masked)` under the eval-mode model.
pub fn token_logprob<T: Real>(params: &ModelParams<T>, seq: &Sequence, t: usize) -> Result<T, ModelError> {
    if t >= seq.len() || seq.ids[t] == PAD_ID {
        return Err(ModelError::Batch(format!("position {t} is padding or out of range")));
    }
    let original = seq.ids[t];
    let mut masked = seq.clone();
    masked.ids[t] = MASK_ID;
    let batch = Batch {
        rows: vec![BatchRow::new(masked, vec![t], vec![original])],
    };
    let logits = forward_mlm(params, &batch, Mode::Eval)?;
    Ok(log_softmax_at(logits.data(), original as usize))
}

/// [`token_logprob`] at each of `positions`, scored in parallel.
pub fn sentence_logprobs<T: Real>(
    params: &ModelParams<T>,
    seq: &Sequence,
    positions: &[usize],
) -> Result<Vec<T>, ModelError> {
    positions.par_iter().map(|&t| token_logprob(params, seq, t)).collect()
}
