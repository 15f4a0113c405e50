//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use l2lab::checkpoint::Checkpoint;
use l2lab::curriculum::{
    checkpoint_of, mask_batch, select, split_corpus, train, MaskStats, MaskingConfig, ParallelCorpus, Phase, Regime,
    RunMeta, Split, TrainData, TrainPlan, TrainState,
};
use l2lab::eval::{evaluate, load_suite_dir, pppl, CategoryMap, EvalReport, ModelScorer, ReportMeta};
use l2lab::experiment::{bilingual_tokenizer, run_desk, DeskRecipe, DeskRun};
use l2lab::model::{init_params, ModelConfig, Mode, Sequence, L1_LANG, L2_LANG};
use l2lab::report::{category_table, settings_table};
use l2lab::stats::{mann_whitney_u, Method, SampleGroup};
use l2lab::eval::category_gain_table;
use l2lab::synth::{SynthConfig, SynthLang, SynthWorld};
use l2lab::tokenizer::{apply_bpe, detokenize, extend_bilingual, train_bpe, Tokenizer};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use common::{bundled, bundled_lines, fixtures, micro_batch, model_grad_check, naive_bpe, permutation, reference, rel_err};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 13,
        emb_dim: 16,
        ffn_dim: 32,
        n_layers: 2,
        n_heads: 2,
        max_positions: 10,
        ..ModelConfig::default()
    };
    let params = init_params::<f64>(&cfg, 21).map_err(|e| e.to_string())?;
    let batch = micro_batch(&cfg, 1, 4);
    if batch.num_predictions() != 1 {
        return Err(format!("{} masked positions", batch.num_predictions()));
    }
    let worst = model_grad_check(&params, &batch, Mode::Eval, 1e-4);
    let ok = worst < 1e-4;
    within(
        start.elapsed(),
        Duration::from_secs(60),
        format!("max rel err {worst:.2e} over {} parameters", params.count()),
    )
    .and_then(|d| check(ok, d))
}

fn pppl_oracle() -> Outcome {
    let world = SynthWorld::new(SynthConfig::default(), 31);
    let train = world.mono(SynthLang::L2, 300);
    let tok = Tokenizer::train(&train, 60, 200).map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        vocab_size: tok.vocab.len(),
        emb_dim: 16,
        ffn_dim: 32,
        n_layers: 2,
        n_heads: 2,
        max_positions: 40,
        init_std: 0.4,
        ..ModelConfig::default()
    };
    let params = init_params::<f64>(&cfg, 32).map_err(|e| e.to_string())?;
    let scorer = ModelScorer {
        params: &params,
        tokenizer: &tok,
        lang: L2_LANG,
    };
    let sentences = SynthWorld::new(SynthConfig::default(), 33).mono(SynthLang::L2, 50);
    let mut worst: f64 = 0.0;
    for s in &sentences {
        let got = pppl(&scorer, s).map_err(|e| e.to_string())?;
        let (seq, _) = Sequence::single(&tok.encode_line(s), L2_LANG, cfg.max_positions);
        worst = worst.max(rel_err(got, reference::pppl(&params, &seq)));
    }
    let uniform = l2lab::eval::pppl_from_logprobs(&[0.5f64.ln(); 7]);
    check(
        worst < 1e-10 && uniform == Some(2.0),
        format!("50 sentences, max rel err {worst:.2e}; uniform p=0.5 gives {uniform:?}"),
    )
}

fn aggregation_fixtures() -> Outcome {
    let fr = fixtures::blimp_reports()
        .into_iter()
        .find(|(l1, _, _)| l1 == "Fr")
        .ok_or("no Fr fixture")?;
    let a = (fr.1.overall - 58.0).abs() <= 0.05;

    let g = fixtures::category_gains();
    let cats = category_gain_table(&fixtures::category_delta_reports(&g));
    let avg: Vec<f64> = cats.average.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let b = avg.iter().zip([3.5, 4.8, 1.6, 0.7]).all(|(x, y)| (x - y).abs() <= 0.05);
    let avg_line = category_table(&cats).to_csv().lines().last().unwrap_or_default().to_string();

    let csv = settings_table(&fixtures::settings_reports()).map_err(|e| e.to_string())?.to_csv();
    let drop = csv.lines().find(|l| l.starts_with("drop,")).unwrap_or_default().to_string();
    let c = drop == "drop,58.0,61.1,52.8,56.2";
    check(
        a && b && c,
        format!(
            "(a) Fr overall {:.3}; (b) Avg. {avg:.3?} -> {avg_line:?}; (c) {drop:?}",
            fr.1.overall
        ),
    )
}

fn mann_whitney_oracle() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 100,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let groups = (1usize..=11).prop_flat_map(|n| {
        (
            proptest::collection::vec((0u8..6).prop_map(f64::from), n),
            proptest::collection::vec((0u8..6).prop_map(f64::from), 1..=(12 - n)),
        )
    });
    let prop = runner.run(&groups, |(a, b)| {
        let r = mann_whitney_u(
            &SampleGroup::new("a", a.clone()).unwrap(),
            &SampleGroup::new("b", b.clone()).unwrap(),
        )
        .unwrap();
        let want = permutation::exact_p(&a, &b);
        prop_assert_eq!(r.method, Method::Exact);
        prop_assert!((r.p - want).abs() < 1e-12, "p {} vs enumeration {}", r.p, want);
        Ok(())
    });
    let triple = mann_whitney_u(
        &SampleGroup::new("a", vec![1.0, 2.0, 3.0]).unwrap(),
        &SampleGroup::new("b", vec![4.0, 5.0, 6.0]).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    match prop {
        Ok(()) => check(triple.p == 0.1, format!("100 random instances agree; [1,2,3] vs [4,5,6] p = {}", triple.p)),
        Err(e) => Err(format!("{e}")),
    }
}

fn desk_model(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        ..DeskRecipe::default().model
    }
}

fn desk_plan(phase: Phase, regime: Regime, epochs: u32, seed: u64) -> TrainPlan {
    TrainPlan {
        checkpoint_epochs: (1..=epochs).collect(),
        ..DeskRecipe::default().plan(phase, regime, epochs, seed)
    }
}

struct Bundled {
    l1: Vec<String>,
    corpus: ParallelCorpus,
    l1_tok: Tokenizer,
    tok: Tokenizer,
}

fn bundled_data() -> Result<Bundled, String> {
    let recipe = DeskRecipe::default();
    let l1 = bundled_lines("l1.txt");
    let corpus = ParallelCorpus::new(bundled_lines("parallel.l1.txt"), bundled_lines("parallel.l2.txt"))
        .map_err(|e| e.to_string())?;
    let l1_tok = Tokenizer::train(&l1, recipe.merges, recipe.vocab_cap).map_err(|e| e.to_string())?;
    let (tok, _) =
        bilingual_tokenizer(&l1_tok, &corpus.l2, recipe.merges, recipe.vocab_cap).map_err(|e| e.to_string())?;
    Ok(Bundled { l1, corpus, l1_tok, tok })
}

fn regime_laws(data: &Bundled) -> Outcome {
    let start = Instant::now();
    let split = split_corpus(data.corpus.len(), 0).map_err(|e| e.to_string())?;
    let td = TrainData::Parallel {
        train: data.corpus.select(&split.train).encode(&data.tok),
        dev: data.corpus.select(&split.dev).encode(&data.tok),
    };
    let n = split.train.len();
    let run = |regime: Regime, epochs: u32| -> Result<Vec<l2lab::curriculum::BatchRecord>, String> {
        let plan = desk_plan(Phase::L2, regime, epochs, 0);
        let params = init_params(&desk_model(data.tok.vocab.len()), 0).map_err(|e| e.to_string())?;
        Ok(train(&plan, TrainState::fresh(params), &td, |_| Ok(())).map_err(|e| e.to_string())?.batches)
    };
    let drop = run(Regime::Drop, 4)?;
    let parity_ok = drop.iter().filter(|r| {
        let bilingual = r.epoch % 2 == 1;
        (r.bilingual_rows == r.rows()) == bilingual && (r.bilingual_rows == 0) == !bilingual && r.has_l1 == bilingual
    });
    let parity = parity_ok.count();

    let partners = |records: &[l2lab::curriculum::BatchRecord], epoch: u32| -> Vec<Option<usize>> {
        let mut p = vec![None; n];
        for r in records.iter().filter(|r| r.epoch == epoch) {
            for &(line, partner) in &r.examples {
                p[line] = partner;
            }
        }
        p
    };
    let nopara = run(Regime::Nopara, 2)?;
    let nopara_differs = partners(&nopara, 1) != partners(&nopara, 2) && partners(&nopara, 1).iter().all(Option::is_some);
    let para = run(Regime::Para, 1)?;
    let para_identity = partners(&para, 1).iter().enumerate().all(|(i, p)| *p == Some(i));
    let ok = parity == drop.len() && nopara_differs && para_identity;
    within(
        start.elapsed(),
        Duration::from_secs(120),
        format!(
            "drop parity {parity}/{} batches; nopara permutation changes: {nopara_differs}; para identity: {para_identity}",
            drop.len()
        ),
    )
    .and_then(|d| check(ok, d))
}

fn tokenizer_checks() -> Outcome {
    let world = SynthWorld::new(SynthConfig::default(), 41);
    let mut lines = world.mono(SynthLang::L1, 700);
    lines.extend(world.mono(SynthLang::L2, 400));
    let tokens: usize = lines.iter().map(|l| l.split_whitespace().count()).sum();
    let fast = train_bpe(&lines, 400).map_err(|e| e.to_string())?;
    let slow = naive_bpe::learn(&lines, 400);
    let oracle = tokens <= 10_000 && fast.merges() == slow.as_slice();

    let mut runner = TestRunner::new(PropConfig {
        cases: 200,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let word = proptest::collection::vec(proptest::char::range('a', 'f'), 1..8).prop_map(|c| c.into_iter().collect::<String>());
    let line = proptest::collection::vec(word, 1..8).prop_map(|w| w.join(" "));
    let fuzz = runner.run(&(line.clone(), proptest::collection::vec(line, 1..6), 0usize..30), |(probe, train, n)| {
        let codes = train_bpe(&train, n).unwrap();
        prop_assert_eq!(detokenize(&apply_bpe(&codes, &probe)), probe.clone());
        let base = Tokenizer::train(&train, n, 30).unwrap();
        let (_, ext) = extend_bilingual(&base.codes, &base.vocab, &[probe], n, 30).unwrap();
        for id in 0..base.vocab.len() as u32 {
            prop_assert_eq!(ext.vocab.token(id), base.vocab.token(id));
        }
        Ok(())
    });
    check(
        oracle && fuzz.is_ok(),
        format!(
            "{} merges match the naive learner on {tokens} tokens: {oracle}; round trip and id preservation: {}",
            fast.len(),
            fuzz.as_ref().map(|_| "200 cases ok".to_string()).unwrap_or_else(|e| e.to_string())
        ),
    )
}

fn determinism_and_resume(data: &Bundled) -> Outcome {
    let ids = data.l1_tok.encode_corpus(&data.l1);
    let split = split_corpus(ids.len(), 5).map_err(|e| e.to_string())?;
    let td = TrainData::Mono {
        train: select(&ids, &split.train),
        dev: select(&ids, &split.dev),
        lang: L1_LANG,
    };
    let plan = desk_plan(Phase::L1, Regime::Mono, 2, 5);
    let meta = RunMeta {
        vocab_hash: data.l1_tok.vocab.content_hash(),
        ..RunMeta::default()
    };
    let cfg = desk_model(data.l1_tok.vocab.len());
    let run = || -> Result<Vec<Vec<u8>>, String> {
        let mut out = Vec::new();
        let params = init_params(&cfg, 5).map_err(|e| e.to_string())?;
        train(&plan, TrainState::fresh(params), &td, |s| {
            out.push(checkpoint_of(s, &plan, &meta).to_bytes().expect("serializable"));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        Ok(out)
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let (a, b) = pool.install(|| Ok::<_, String>((run()?, run()?)))?;
    let identical = a == b;
    let resumed = pool.install(|| -> Result<Vec<u8>, String> {
        let ck = Checkpoint::from_bytes(&a[0]).map_err(|e| e.to_string())?;
        let state = TrainState::from_checkpoint(ck).map_err(|e| e.to_string())?;
        let out = train(&plan, state, &td, |_| Ok(())).map_err(|e| e.to_string())?;
        checkpoint_of(&out.state, &plan, &meta).to_bytes().map_err(|e| e.to_string())
    })?;
    let resume_ok = resumed == a[1];
    check(
        identical && resume_ok,
        format!("retrain bitwise identical: {identical}; resume from epoch 1 reproduces epoch 2: {resume_ok}"),
    )
}

fn masking_statistics(data: &Bundled) -> Outcome {
    let seqs: Vec<Sequence> = data
        .l1_tok
        .encode_corpus(&data.l1)
        .iter()
        .map(|ids| Sequence::single(ids, L1_LANG, 64).0)
        .collect();
    let mut total = MaskStats::default();
    let mut key = 0u64;
    while total.eligible < 100_000 {
        for chunk in seqs.chunks(32) {
            let (_, s) =
                mask_batch(chunk, &MaskingConfig::default(), data.l1_tok.vocab.len(), key).map_err(|e| e.to_string())?;
            total.merge(&s);
            key += 1;
        }
    }
    let rate = total.selected as f64 / total.eligible as f64;
    let sel = total.selected as f64;
    let split = [total.masked as f64 / sel, total.randomized as f64 / sel, total.kept as f64 / sel];
    let ok = (0.14..=0.16).contains(&rate) && split.iter().zip([0.8, 0.1, 0.1]).all(|(x, y)| (x - y).abs() <= 0.01);
    check(
        ok,
        format!("{} eligible tokens, rate {rate:.4}, split {split:.4?}", total.eligible),
    )
}

fn chance_calibration(data: &Bundled) -> Outcome {
    let suites = load_suite_dir(&bundled("chance"), &CategoryMap::default()).map_err(|e| e.to_string())?;
    let pairs = suites.iter().map(|s| s.pairs.len()).sum::<usize>();
    let identical = suites
        .iter()
        .flat_map(|s| &s.pairs)
        .filter(|p| p.sentence_good == p.sentence_bad)
        .count();
    let mut scores = Vec::new();
    for seed in 0..10 {
        let params = init_params::<f32>(&desk_model(data.tok.vocab.len()), 1_000 + seed).map_err(|e| e.to_string())?;
        let scorer = ModelScorer {
            params: &params,
            tokenizer: &data.tok,
            lang: L2_LANG,
        };
        let r = evaluate(&scorer, &suites, ReportMeta::default()).map_err(|e| e.to_string())?;
        scores.push(r.overall);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    check(
        pairs == 1000 && identical == 0 && (mean - 50.0).abs() <= 5.0,
        format!("{pairs} pairs, 10 fresh models, mean {mean:.2} (per seed {scores:.1?})"),
    )
}

fn desk_replication(runs: &[DeskRun], elapsed: Duration) -> Outcome {
    let mean = |f: fn(&DeskRun) -> &EvalReport| runs.iter().map(|r| f(r).overall).sum::<f64>() / runs.len() as f64;
    let with = mean(|r| &r.pretrained);
    let without = mean(|r| &r.scratch);
    within(
        elapsed,
        Duration::from_secs(30 * 60),
        format!("{} seeds: with L1 pretraining {with:.1}, from scratch {without:.1}, delta {:.1}", runs.len(), with - without),
    )
    .and_then(|d| check(with > without, d))
}

fn training_sanity(run: &DeskRun, vocab: usize) -> Outcome {
    let epoch = |e: u32| run.l1_log.iter().find(|r| r.split == Split::TrainEpoch && r.epoch == e).map(|r| r.loss);
    let initial = run.l1_log.iter().find(|r| r.split == Split::Dev && r.epoch == 0).map(|r| r.loss);
    let (Some(first), Some(fifth), Some(initial)) = (epoch(1), epoch(5), initial) else {
        return Err("missing log rows".into());
    };
    let uniform = (vocab as f64).ln();
    let dev = (initial - uniform).abs() / uniform;
    check(
        fifth < first && dev < 0.05,
        format!("train loss epoch 1 {first:.3} -> epoch 5 {fifth:.3}; initial dev loss {initial:.3} vs ln V {uniform:.3} ({:.1}% off)", dev * 100.0),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n:>2} {tag} {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
        results.push((n, name, outcome));
    };

    record(1, "gradient oracle", &mut gradient_oracle);
    record(2, "pppl oracle", &mut pppl_oracle);
    record(3, "aggregation fixtures", &mut aggregation_fixtures);
    record(4, "mann-whitney oracle", &mut mann_whitney_oracle);
    let data = match bundled_data() {
        Ok(d) => d,
        Err(e) => {
            println!("bundled data unavailable: {e}");
            std::process::exit(1);
        }
    };
    record(5, "regime laws", &mut || regime_laws(&data));
    record(6, "tokenizer", &mut tokenizer_checks);
    record(7, "determinism and resume", &mut || determinism_and_resume(&data));
    record(8, "masking statistics", &mut || masking_statistics(&data));
    record(9, "chance calibration", &mut || chance_calibration(&data));

    let start = Instant::now();
    let recipe = DeskRecipe::default();
    let runs: Result<Vec<DeskRun>, String> = (0..4).map(|s| run_desk(&recipe, s).map_err(|e| e.to_string())).collect();
    let elapsed = start.elapsed();
    let l1_vocab = data.l1_tok.vocab.len();
    match runs {
        Ok(runs) => {
            record(10, "desk replication", &mut || desk_replication(&runs, elapsed));
            record(11, "training sanity", &mut || training_sanity(&runs[0], l1_vocab));
        }
        Err(e) => {
            record(10, "desk replication", &mut || Err(e.clone()));
            record(11, "training sanity", &mut || Err(e.clone()));
        }
    }

    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
