//! Two synthetic micro-languages with shared agreement morphology, and
//! minimal-pair suites over the second one.
//!
//! Sentence template: `DET N NUM [P DET N NUM] V AGR [DET N NUM]`. Both
//! languages mark noun number with `zu`/`zi` and subject-verb agreement with
//! `ta`/`ti`; determiners, prepositions and content words differ.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eval::{Category, MinimalPair, TestSuite};
use crate::rng::{self, Stream};

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const NUM_SG: &str = "zu";
const NUM_PL: &str = "zi";
const AGR_SG: &str = "ta";
const AGR_PL: &str = "ti";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthLang {
    /// The pretraining language.
    L1,
    /// The language evaluated with minimal pairs.
    L2,
}

/// Word forms of one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lexicon {
    pub det_sg: [String; 2],
    pub det_pl: [String; 2],
    pub preps: [String; 2],
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub nouns: usize,
    pub verbs: usize,
    pub pp_rate: f64,
    pub object_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nouns: 40,
            verbs: 20,
            pp_rate: 0.5,
            object_rate: 0.5,
        }
    }
}

fn strings<const N: usize>(xs: [&str; N]) -> [String; N] {
    xs.map(String::from)
}

impl Lexicon {
    pub fn new(lang: SynthLang, cfg: &SynthConfig, seed: u64) -> Self {
        let (consonants, det_sg, det_pl, preps): (&[char], _, _, _) = match lang {
            SynthLang::L1 => (
                &['b', 'd', 'g', 'k', 'm', 'n', 'p', 'r'],
                ["mo", "ra"],
                ["mu", "re"],
                ["ni", "gok"],
            ),
            SynthLang::L2 => (
                &['f', 'h', 'l', 's', 'v', 'w'],
                ["fo", "la"],
                ["fu", "le"],
                ["wi", "sal"],
            ),
        };
        let mut taken: BTreeSet<String> = det_sg
            .iter()
            .chain(&det_pl)
            .chain(&preps)
            .chain(&[NUM_SG, NUM_PL, AGR_SG, AGR_PL])
            .map(|s| s.to_string())
            .collect();
        let lang_tag = match lang {
            SynthLang::L1 => 1,
            SynthLang::L2 => 2,
        };
        let mut rng = rng::stream(seed, Stream::Synth, &[lang_tag, 0]);
        let mut words = |n: usize, rng: &mut ChaCha8Rng| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let syllables = rng.random_range(2..=3);
                let w: String = (0..syllables)
                    .flat_map(|_| [*consonants.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()])
                    .collect();
                if taken.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let nouns = words(cfg.nouns, &mut rng);
        let verbs = words(cfg.verbs, &mut rng);
        Self {
            det_sg: strings(det_sg),
            det_pl: strings(det_pl),
            preps: strings(preps),
            nouns,
            verbs,
        }
    }
}

/// A noun phrase before realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NounPhrase {
    pub det: usize,
    pub noun: usize,
    pub plural: bool,
}

/// Language-independent sentence structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clause {
    pub subject: NounPhrase,
    pub modifier: Option<(usize, NounPhrase)>,
    pub verb: usize,
    pub object: Option<NounPhrase>,
}

/// Surface choices that can be made ungrammatical.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Errors {
    pub flip_agreement: bool,
    pub flip_subject_det: bool,
}

fn push_np(out: &mut Vec<String>, lex: &Lexicon, np: NounPhrase, det_plural: bool) {
    let dets = if det_plural { &lex.det_pl } else { &lex.det_sg };
    out.push(dets[np.det].clone());
    out.push(lex.nouns[np.noun].clone());
    out.push(if np.plural { NUM_PL } else { NUM_SG }.to_string());
}

impl Clause {
    pub fn random<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Self {
        let np = |rng: &mut R| NounPhrase {
            det: rng.random_range(0..2),
            noun: rng.random_range(0..cfg.nouns),
            plural: rng.random_bool(0.5),
        };
        let subject = np(rng);
        let modifier = rng.random_bool(cfg.pp_rate).then(|| (rng.random_range(0..2), np(rng)));
        let verb = rng.random_range(0..cfg.verbs);
        let object = rng.random_bool(cfg.object_rate).then(|| np(rng));
        Self {
            subject,
            modifier,
            verb,
            object,
        }
    }

    pub fn realize(&self, lex: &Lexicon, errors: Errors) -> String {
        let mut w = Vec::with_capacity(16);
        push_np(&mut w, lex, self.subject, self.subject.plural != errors.flip_subject_det);
        if let Some((p, np)) = self.modifier {
            w.push(lex.preps[p].clone());
            push_np(&mut w, lex, np, np.plural);
        }
        w.push(lex.verbs[self.verb].clone());
        let agree_plural = self.subject.plural != errors.flip_agreement;
        w.push(if agree_plural { AGR_PL } else { AGR_SG }.to_string());
        if let Some(np) = self.object {
            push_np(&mut w, lex, np, np.plural);
        }
        w.join(" ")
    }
}

/// Both lexicons and the generator settings.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub cfg: SynthConfig,
    pub l1: Lexicon,
    pub l2: Lexicon,
    pub seed: u64,
}

impl SynthWorld {
    pub fn new(cfg: SynthConfig, seed: u64) -> Self {
        let l1 = Lexicon::new(SynthLang::L1, &cfg, seed);
        let l2 = Lexicon::new(SynthLang::L2, &cfg, seed);
        Self { cfg, l1, l2, seed }
    }

    pub fn lexicon(&self, lang: SynthLang) -> &Lexicon {
        match lang {
            SynthLang::L1 => &self.l1,
            SynthLang::L2 => &self.l2,
        }
    }

    fn clauses(&self, n: usize, counter: u64) -> Vec<Clause> {
        let mut rng = rng::stream(self.seed, Stream::Synth, &[10, counter]);
        (0..n).map(|_| Clause::random(&mut rng, &self.cfg)).collect()
    }

    /// `n` grammatical sentences in one language.
    pub fn mono(&self, lang: SynthLang, n: usize) -> Vec<String> {
        let counter = match lang {
            SynthLang::L1 => 1,
            SynthLang::L2 => 2,
        };
        let lex = self.lexicon(lang);
        self.clauses(n, counter).iter().map(|c| c.realize(lex, Errors::default())).collect()
    }

    /// `n` translation pairs: one clause realized in both languages.
    pub fn parallel(&self, n: usize) -> (Vec<String>, Vec<String>) {
        self.clauses(n, 3)
            .iter()
            .map(|c| (c.realize(&self.l1, Errors::default()), c.realize(&self.l2, Errors::default())))
            .unzip()
    }

    /// The grammatical L2 suites: subject-verb agreement, determiner-noun
    /// agreement and agreement across a prepositional attractor.
    pub fn l2_suites(&self, pairs: usize) -> Vec<TestSuite> {
        let mut rng = rng::stream(self.seed, Stream::Synth, &[20]);
        let mut out = Vec::new();
        let kinds: [(&str, Category); 3] = [
            ("subject_verb_agreement", Category::Morphology),
            ("determiner_noun_agreement", Category::Morphology),
            ("agreement_attractor", Category::Syntax),
        ];
        for (k, (id, category)) in kinds.into_iter().enumerate() {
            let mut suite = Vec::with_capacity(pairs);
            while suite.len() < pairs {
                let mut c = Clause::random(&mut rng, &self.cfg);
                let errors = match k {
                    0 => {
                        c.modifier = None;
                        Errors {
                            flip_agreement: true,
                            ..Errors::default()
                        }
                    }
                    1 => Errors {
                        flip_subject_det: true,
                        ..Errors::default()
                    },
                    _ => {
                        let (p, mut np) = c.modifier.unwrap_or((0, c.subject));
                        np.plural = !c.subject.plural;
                        c.modifier = Some((p, np));
                        Errors {
                            flip_agreement: true,
                            ..Errors::default()
                        }
                    }
                };
                suite.push(MinimalPair {
                    sentence_good: c.realize(&self.l2, Errors::default()),
                    sentence_bad: c.realize(&self.l2, errors),
                    suite_id: id.to_string(),
                });
            }
            out.push(TestSuite {
                suite_id: id.to_string(),
                category: Some(category),
                pairs: suite,
            });
        }
        out
    }

    /// Pairs that differ by one substituted L2 word, with a coin flip deciding
    /// which side is called grammatical. No model preference is right here,
    /// so any fixed scorer should land near 50.
    pub fn chance_suite(&self, pairs: usize, counter: u64) -> TestSuite {
        let mut rng = rng::stream(self.seed, Stream::Chance, &[counter]);
        let lex = &self.l2;
        let pool: Vec<&String> = lex.nouns.iter().chain(&lex.verbs).collect();
        let mut out = Vec::with_capacity(pairs);
        while out.len() < pairs {
            let c = Clause::random(&mut rng, &self.cfg);
            let a = c.realize(lex, Errors::default());
            let mut words: Vec<&str> = a.split(' ').collect();
            let i = rng.random_range(0..words.len());
            let sub = pool.choose(&mut rng).expect("non-empty lexicon");
            if words[i] == sub.as_str() {
                continue;
            }
            words[i] = sub;
            let b = words.join(" ");
            let (good, bad) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            out.push(MinimalPair {
                sentence_good: good,
                sentence_bad: bad,
                suite_id: "chance".into(),
            });
        }
        TestSuite {
            suite_id: "chance".into(),
            category: None,
            pairs: out,
        }
    }
}
