use std::collections::HashMap;
use std::ops::Range;

use sha2::{Digest, Sha256};

use super::bpe::{apply_bpe_corpus, train_bpe, BpeCodes};
use super::TokenizerError;

pub const MASK_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const BOS_ID: u32 = 3;
pub const EOS_ID: u32 = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<mask>", "<pad>", "<unk>", "<s>", "</s>"];

/// Default per-phase vocabulary cap.
pub const DEFAULT_VOCAB_CAP: usize = 14_000;

/// Dense id-mapped subword vocabulary. Ids `0..5` are the reserved specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::specials_only()
    }
}

impl Vocab {
    pub fn specials_only() -> Self {
        let entries: Vec<(String, u64)> = SPECIAL_TOKENS.iter().map(|s| (s.to_string(), 0)).collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (s, _))| (s.clone(), i as u32))
            .collect();
        Self { entries, index }
    }

    /// Appends `(subword, count)` entries in order; duplicates are an error.
    pub fn from_entries<I>(entries: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut vocab = Self::specials_only();
        for (s, c) in entries {
            if vocab.index.contains_key(&s) {
                return Err(TokenizerError::DuplicateSubword(s));
            }
            vocab.push(s, c);
        }
        Ok(vocab)
    }

    fn push(&mut self, subword: String, count: u64) {
        self.index.insert(subword.clone(), self.entries.len() as u32);
        self.entries.push((subword, count));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() == NUM_SPECIALS
    }

    pub fn id(&self, subword: &str) -> Option<u32> {
        self.index.get(subword).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(|(s, _)| s.as_str())
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.entries.get(id as usize).map(|&(_, c)| c)
    }

    /// Non-special entries in id order.
    pub fn subwords(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries[NUM_SPECIALS..].iter().map(|(s, c)| (s.as_str(), *c))
    }

    pub fn encode<S: AsRef<str>>(&self, subwords: &[S]) -> Vec<u32> {
        subwords
            .iter()
            .map(|s| self.id(s.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>, TokenizerError> {
        ids.iter()
            .map(|&id| {
                self.token(id)
                    .map(str::to_string)
                    .ok_or(TokenizerError::IdOutOfRange { id, size: self.len() })
            })
            .collect()
    }

    /// Vocab file: one `SUBWORD COUNT` line per non-special entry; the line
    /// number plus the number of specials is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, c) in self.subwords() {
            out.push_str(s);
            out.push(' ');
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| TokenizerError::Parse { line: lineno + 1, message };
            let (s, c) = line
                .rsplit_once(' ')
                .ok_or_else(|| parse_err(format!("expected `SUBWORD COUNT`, got {line:?}")))?;
            let count = c
                .parse::<u64>()
                .map_err(|e| parse_err(format!("bad count {c:?}: {e}")))?;
            entries.push((s.to_string(), count));
        }
        Self::from_entries(entries)
    }

    /// Hex SHA-256 of the vocab file contents; checkpoints record it.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Builds a vocabulary of the `cap - 5` most frequent subwords (ties broken
/// by lexicographic order), after the reserved specials.
pub fn build_vocab<I, S>(segmented: I, cap: usize) -> Result<Vocab, TokenizerError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if cap < NUM_SPECIALS {
        return Err(TokenizerError::CapTooSmall(cap));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for unit in segmented {
        let unit = unit.as_ref();
        if SPECIAL_TOKENS.contains(&unit) {
            continue;
        }
        match counts.get_mut(unit) {
            Some(c) => *c += 1,
            None => {
                counts.insert(unit.to_string(), 1);
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap - NUM_SPECIALS);
    Vocab::from_entries(ranked)
}

/// A base vocabulary with a contiguous block of appended L2 subwords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabExtension {
    pub vocab: Vocab,
    pub base_size: usize,
}

impl VocabExtension {
    pub fn added_ids(&self) -> Range<usize> {
        self.base_size..self.vocab.len()
    }

    pub fn added_count(&self) -> usize {
        self.vocab.len() - self.base_size
    }
}

/// Learns L2 merges and subwords and appends the ones the base lacks.
///
/// New merges go after the base merges; the L2 corpus is then segmented with
/// the combined codes and its top `cap - 5` subwords are appended after the
/// base vocabulary, skipping any the base already has. Base ids never move.
pub fn extend_bilingual<S: AsRef<str>>(
    base_codes: &BpeCodes,
    base_vocab: &Vocab,
    l2_corpus: &[S],
    extra_merges: usize,
    cap: usize,
) -> Result<(BpeCodes, VocabExtension), TokenizerError> {
    let l2_codes = train_bpe(l2_corpus, extra_merges)?;
    let codes = base_codes.extended_with(&l2_codes);
    let segmented = apply_bpe_corpus(&codes, l2_corpus);
    let l2_vocab = build_vocab(segmented.iter().flatten(), cap)?;
    let mut vocab = base_vocab.clone();
    for (s, c) in l2_vocab.subwords() {
        if vocab.id(s).is_none() {
            vocab.push(s.to_string(), c);
        }
    }
    Ok((
        codes,
        VocabExtension {
            vocab,
            base_size: base_vocab.len(),
        },
    ))
}
