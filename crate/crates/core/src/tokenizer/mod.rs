//! Subword tokenization: BPE merge learning, fixed-size vocabularies and the
//! bilingual vocabulary extension used when moving from L1 to L1+L2 training.
//!
//! Input text is assumed to be whitespace-tokenized already (one sentence per
//! line). All functions are pure.

mod bpe;
mod vocab;

use thiserror::Error;

pub use bpe::{apply_bpe, apply_bpe_corpus, detokenize, train_bpe, BpeCodes, END_OF_WORD};
pub use vocab::{
    build_vocab, extend_bilingual, Vocab, VocabExtension, BOS_ID, DEFAULT_VOCAB_CAP, EOS_ID,
    MASK_ID, NUM_SPECIALS, PAD_ID, SPECIAL_TOKENS, UNK_ID,
};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("duplicate merge rule `{left} {right}`")]
    DuplicateMerge { left: String, right: String },
    #[error("duplicate subword {0:?} in vocabulary")]
    DuplicateSubword(String),
    #[error("vocabulary cap {0} cannot hold the 5 reserved specials")]
    CapTooSmall(usize),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// BPE codes paired with the vocabulary they were built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    pub codes: BpeCodes,
    pub vocab: Vocab,
}

impl Tokenizer {
    pub fn new(codes: BpeCodes, vocab: Vocab) -> Self {
        Self { codes, vocab }
    }

    /// Learns codes and a vocabulary from one corpus.
    pub fn train<S: AsRef<str>>(corpus: &[S], merges: usize, cap: usize) -> Result<Self, TokenizerError> {
        let codes = train_bpe(corpus, merges)?;
        let segmented = apply_bpe_corpus(&codes, corpus);
        let vocab = build_vocab(segmented.iter().flatten(), cap)?;
        Ok(Self { codes, vocab })
    }

    pub fn segment(&self, line: &str) -> Vec<String> {
        apply_bpe(&self.codes, line)
    }

    pub fn encode_line(&self, line: &str) -> Vec<u32> {
        self.vocab.encode(&self.segment(line))
    }

    pub fn encode_corpus<S: AsRef<str>>(&self, lines: &[S]) -> Vec<Vec<u32>> {
        apply_bpe_corpus(&self.codes, lines)
            .iter()
            .map(|units| self.vocab.encode(units))
            .collect()
    }

    pub fn decode_line(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        Ok(detokenize(&self.vocab.decode(ids)?))
    }
}
