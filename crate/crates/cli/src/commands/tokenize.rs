use std::path::Path;

use l2lab::experiment::bilingual_tokenizer;
use l2lab::tokenizer::Tokenizer;

use crate::error::Result;
use crate::files;

pub fn train(corpus: &Path, merges: usize, cap: usize, out: &Path) -> Result<Tokenizer> {
    files::require_exists("--corpus", corpus)?;
    let lines = files::read_sentences(corpus)?;
    let tok = Tokenizer::train(&lines, merges, cap)?;
    files::save_tokenizer(out, &tok)?;
    Ok(tok)
}

/// Extends `base` with L2 merges and subwords; returns the new tokenizer and
/// the size of the base vocabulary.
pub fn extend(base: &Path, corpus: &Path, merges: usize, cap: usize, out: &Path) -> Result<(Tokenizer, usize)> {
    files::require_exists("--base", base)?;
    files::require_exists("--corpus", corpus)?;
    let base = files::load_tokenizer(base)?;
    let lines = files::read_sentences(corpus)?;
    let (tok, base_size) = bilingual_tokenizer(&base, &lines, merges, cap)?;
    files::save_tokenizer(out, &tok)?;
    Ok((tok, base_size))
}

/// Segments (or encodes, with `ids`) every line of `input`.
pub fn apply(tokenizer: &Path, input: &Path, ids: bool) -> Result<String> {
    files::require_exists("--tokenizer", tokenizer)?;
    files::require_exists("--input", input)?;
    let tok = files::load_tokenizer(tokenizer)?;
    let mut out = String::new();
    for line in files::read_lines(input)? {
        let row: Vec<String> = if ids {
            tok.encode_line(&line).iter().map(u32::to_string).collect()
        } else {
            tok.segment(&line)
        };
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}
