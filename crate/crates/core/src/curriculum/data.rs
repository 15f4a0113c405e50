use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::{Sequence, L1_LANG, L2_LANG};
use crate::rng::{self, Stream};
use crate::tokenizer::Tokenizer;

use super::{CurriculumError, Regime};

/// Line indices of the train, dev and test partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it 8:1:1 (floor, floor, remainder).
pub fn split_corpus(n: usize, seed: u64) -> Result<CorpusSplit, CurriculumError> {
    if n < 10 {
        return Err(CurriculumError::TooSmall(n));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::stream(seed, Stream::Split, &[n as u64]));
    let n_train = n * 8 / 10;
    let n_dev = n / 10;
    let test = ids.split_off(n_train + n_dev);
    let dev = ids.split_off(n_train);
    Ok(CorpusSplit { train: ids, dev, test })
}

pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Sentence-aligned text in two languages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub l1: Vec<String>,
    pub l2: Vec<String>,
}

impl ParallelCorpus {
    pub fn new(l1: Vec<String>, l2: Vec<String>) -> Result<Self, CurriculumError> {
        if l1.len() != l2.len() {
            return Err(CurriculumError::Misaligned {
                l1: l1.len(),
                l2: l2.len(),
            });
        }
        for (side, lines) in [("L1", &l1), ("L2", &l2)] {
            if let Some(i) = lines.iter().position(|l| l.trim().is_empty()) {
                return Err(CurriculumError::EmptyLine { side, line: i + 1 });
            }
        }
        Ok(Self { l1, l2 })
    }

    pub fn len(&self) -> usize {
        self.l1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l1.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            l1: select(&self.l1, idx),
            l2: select(&self.l2, idx),
        }
    }

    pub fn encode(&self, tok: &Tokenizer) -> AlignedIds {
        AlignedIds {
            l1: tok.encode_corpus(&self.l1),
            l2: tok.encode_corpus(&self.l2),
        }
    }
}

/// Token ids of a parallel corpus, line-aligned.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignedIds {
    pub l1: Vec<Vec<u32>>,
    pub l2: Vec<Vec<u32>>,
}

impl AlignedIds {
    pub fn len(&self) -> usize {
        self.l1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l1.is_empty()
    }
}

/// One training input and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub seq: Sequence,
    /// Index of the line (the L2 line for bilingual inputs).
    pub line: usize,
    /// Index of the L1 line paired with `line`, for bilingual inputs.
    pub partner: Option<usize>,
    pub truncated: bool,
}

impl Example {
    pub fn bilingual(&self) -> bool {
        self.partner.is_some()
    }
}

/// Single-language examples, one per line.
pub fn make_mono_stream(lines: &[Vec<u32>], lang: u32, max_len: usize) -> Vec<Example> {
    lines
        .iter()
        .enumerate()
        .map(|(i, ids)| {
            let (seq, truncated) = Sequence::single(ids, lang, max_len);
            Example {
                seq,
                line: i,
                partner: None,
                truncated,
            }
        })
        .collect()
}

/// Uniform permutation of `0..n` drawn from `(seed, epoch)`.
pub fn nopara_permutation(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, Stream::Permute, &[epoch as u64]));
    p
}

/// Whether a drop-regime epoch is bilingual. Epochs are 1-based and odd
/// epochs are bilingual unless `odd_bilingual` is false.
pub fn drop_epoch_is_bilingual(epoch: u32, odd_bilingual: bool) -> bool {
    (epoch % 2 == 1) == odd_bilingual
}

/// Examples for one epoch of L2 exposure under `regime`.
pub fn make_l2_stream(
    pairs: &AlignedIds,
    regime: Regime,
    epoch: u32,
    seed: u64,
    max_len: usize,
) -> Result<Vec<Example>, CurriculumError> {
    make_l2_stream_with_parity(pairs, regime, epoch, seed, max_len, true)
}

pub fn make_l2_stream_with_parity(
    pairs: &AlignedIds,
    regime: Regime,
    epoch: u32,
    seed: u64,
    max_len: usize,
    odd_bilingual: bool,
) -> Result<Vec<Example>, CurriculumError> {
    let n = pairs.len();
    let partners: Option<Vec<usize>> = match regime {
        Regime::Para => Some((0..n).collect()),
        Regime::Nopara => Some(nopara_permutation(n, seed, epoch)),
        Regime::Drop => drop_epoch_is_bilingual(epoch, odd_bilingual).then(|| (0..n).collect()),
        Regime::Mono => return Err(CurriculumError::Regime(regime)),
    };
    Ok(match partners {
        Some(partners) => partners
            .into_iter()
            .enumerate()
            .map(|(i, j)| {
                let (seq, truncated) = Sequence::pair(&pairs.l1[j], L1_LANG, &pairs.l2[i], L2_LANG, max_len);
                Example {
                    seq,
                    line: i,
                    partner: Some(j),
                    truncated,
                }
            })
            .collect(),
        None => make_mono_stream(&pairs.l2, L2_LANG, max_len),
    })
}

/// Visiting order of `n` examples in an epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, Stream::Shuffle, &[epoch as u64]));
    p
}

/// Greedy packing of examples (in the given order) into micro-batches of at
/// most `budget` tokens. An example longer than the budget gets its own batch.
pub fn token_batches(lengths: &[usize], order: &[usize], budget: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut used = 0;
    for &i in order {
        let len = lengths[i];
        if !cur.is_empty() && used + len > budget {
            out.push(std::mem::take(&mut cur));
            used = 0;
        }
        cur.push(i);
        used += len;
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
