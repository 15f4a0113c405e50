//! Helpers and independent oracles shared by the integration tests.

#![allow(dead_code)]

pub mod fixtures;
pub mod naive_bpe;
pub mod permutation;
pub mod reference;

use l2lab::model::{loss_and_grads, Batch, BatchRow, ModelConfig, ModelParams, Mode, Sequence};
use l2lab::tokenizer::{MASK_ID, NUM_SPECIALS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Denominator floor for relative errors, so that gradients that are zero
/// up to rounding do not register as large relative mismatches.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Random single-language rows with one masked position each.
pub fn micro_batch(cfg: &ModelConfig, rows: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..rows)
        .map(|_| {
            let len = rng.random_range(2..=(cfg.max_positions - 2).min(6));
            let ids: Vec<u32> = (0..len)
                .map(|_| rng.random_range(NUM_SPECIALS as u32..cfg.vocab_size as u32))
                .collect();
            let lang = rng.random_range(0..cfg.n_languages as u32);
            let (mut seq, _) = Sequence::single(&ids, lang, cfg.max_positions);
            let col = rng.random_range(1..=len);
            let target = seq.ids[col];
            seq.ids[col] = MASK_ID;
            BatchRow::new(seq, vec![col], vec![target])
        })
        .collect();
    Batch::new(rows).unwrap()
}

/// Largest relative error between the analytic gradient of the mean masked
/// loss and central finite differences with step `h`.
pub fn model_grad_check(params: &ModelParams<f64>, batch: &Batch, mode: Mode, h: f64) -> f64 {
    let (_, analytic) = loss_and_grads(params, batch, mode).unwrap();
    let loss_at = |p: &ModelParams<f64>| loss_and_grads(p, batch, mode).unwrap().0.loss;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for (i, g) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let orig = probe.tensors[i].data()[j];
            probe.tensors[i].data_mut()[j] = orig + h;
            let up = loss_at(&probe);
            probe.tensors[i].data_mut()[j] = orig - h;
            let down = loss_at(&probe);
            probe.tensors[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(g.data()[j], numeric);
            if std::env::var("GRAD_DEBUG").is_ok() && e > 1e-5 {
                eprintln!("{} [{j}] analytic {} numeric {numeric} err {e}", params.names[i], g.data()[j]);
            }
            worst = worst.max(e);
        }
    }
    worst
}

/// A file of the bundled synthetic data set.
pub fn bundled(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/synthetic")
        .join(name)
}

pub fn bundled_lines(name: &str) -> Vec<String> {
    std::fs::read_to_string(bundled(name))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
        .lines()
        .map(str::to_string)
        .collect()
}

/// A model small enough that a few epochs over the bundled corpora take seconds.
pub fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        emb_dim: 16,
        ffn_dim: 32,
        n_layers: 1,
        n_heads: 2,
        max_positions: 64,
        ..ModelConfig::default()
    }
}
