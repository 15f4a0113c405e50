mod common;

use l2lab::eval::{judge, pppl, pppl_from_logprobs, EvalError, ModelScorer, Scorer};
use l2lab::model::{init_params, ModelConfig, ModelParams, Sequence, L2_LANG};
use l2lab::synth::{SynthConfig, SynthLang, SynthWorld};
use l2lab::tokenizer::Tokenizer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{reference, rel_err};

fn toy(vocab_size: usize) -> ModelParams<f64> {
    let cfg = ModelConfig {
        vocab_size,
        emb_dim: 16,
        ffn_dim: 32,
        n_layers: 2,
        n_heads: 2,
        max_positions: 40,
        init_std: 0.4,
        ..ModelConfig::default()
    };
    init_params(&cfg, 11).unwrap()
}

#[test]
fn matches_position_by_position_recomputation() {
    let world = SynthWorld::new(SynthConfig::default(), 3);
    let train = world.mono(SynthLang::L2, 300);
    let tok = Tokenizer::train(&train, 60, 200).unwrap();
    let params = toy(tok.vocab.len());
    let scorer = ModelScorer {
        params: &params,
        tokenizer: &tok,
        lang: L2_LANG,
    };
    // Fresh sentences plus shuffled word salad, so some subwords are unknown.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sentences = SynthWorld::new(SynthConfig::default(), 4).mono(SynthLang::L2, 40);
    for _ in 0..10 {
        let n = rng.random_range(1..8);
        let words: Vec<&str> = (0..n)
            .map(|_| {
                let line = &train[rng.random_range(0..train.len())];
                let ws: Vec<&str> = line.split_whitespace().collect();
                ws[rng.random_range(0..ws.len())]
            })
            .collect();
        sentences.push(words.join(" "));
    }
    assert_eq!(sentences.len(), 50);

    let mut worst: f64 = 0.0;
    for s in &sentences {
        let got = pppl(&scorer, s).unwrap();
        let (seq, _) = Sequence::single(&tok.encode_line(s), L2_LANG, params.config.max_positions);
        let want = reference::pppl(&params, &seq);
        worst = worst.max(rel_err(got, want));
    }
    assert!(worst < 1e-10, "max rel err {worst:e}");
}

struct Uniform(f64);

impl Scorer for Uniform {
    fn unit_logprobs(&self, sentence: &str) -> Result<Vec<f64>, EvalError> {
        Ok(vec![self.0.ln(); sentence.split_whitespace().count()])
    }
}

#[test]
fn uniform_half_is_exactly_two() {
    assert_eq!(pppl(&Uniform(0.5), "a b c d e").unwrap(), 2.0);
    assert_eq!(pppl_from_logprobs(&[0.5f64.ln()]), Some(2.0));
    assert_eq!(pppl_from_logprobs(&[]), None);
}

#[test]
fn equal_scores_are_judged_incorrect() {
    let s = Uniform(0.25);
    let a = pppl(&s, "x y").unwrap();
    let b = pppl(&s, "y x").unwrap();
    assert!(!judge(a, b));
}
