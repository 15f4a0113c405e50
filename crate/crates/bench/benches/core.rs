use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use l2lab::curriculum::{mask_batch, MaskingConfig};
use l2lab::eval::{pppl, ModelScorer};
use l2lab::model::{forward_mlm, init_params, loss_and_grads, Mode, ModelConfig, Sequence, L2_LANG};
use l2lab::synth::{SynthConfig, SynthLang, SynthWorld};
use l2lab::tokenizer::{train_bpe, Tokenizer};

fn corpus(n: usize) -> Vec<String> {
    SynthWorld::new(SynthConfig::default(), 7).mono(SynthLang::L2, n)
}

fn bpe(c: &mut Criterion) {
    let lines = corpus(1000);
    c.bench_function("bpe_train_200_merges", |b| b.iter(|| train_bpe(black_box(&lines), 200).unwrap()));
}

fn model(c: &mut Criterion) {
    let lines = corpus(200);
    let tok = Tokenizer::train(&lines, 200, 1000).unwrap();
    let cfg = ModelConfig::desk(tok.vocab.len());
    let params = init_params::<f32>(&cfg, 0).unwrap();
    let seqs: Vec<Sequence> = tok
        .encode_corpus(&lines[..32])
        .iter()
        .map(|ids| Sequence::single(ids, L2_LANG, cfg.max_positions).0)
        .collect();
    let (batch, _) = mask_batch(&seqs, &MaskingConfig::default(), tok.vocab.len(), 0).unwrap();

    c.bench_function("forward_32_rows", |b| b.iter(|| forward_mlm(&params, black_box(&batch), Mode::Eval).unwrap()));
    c.bench_function("loss_and_grads_32_rows", |b| {
        b.iter(|| loss_and_grads(&params, black_box(&batch), Mode::Eval).unwrap())
    });

    let scorer = ModelScorer {
        params: &params,
        tokenizer: &tok,
        lang: L2_LANG,
    };
    let sentence = lines[0].as_str();
    c.bench_function("pppl_one_sentence", |b| b.iter(|| pppl(&scorer, black_box(sentence)).unwrap()));
}

criterion_group!(benches, bpe, model);
criterion_main!(benches);
