use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use l2lab::tokenizer::{BpeCodes, Tokenizer, Vocab};

use crate::error::{CliError, Result};

pub const CODES_FILE: &str = "codes.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Lines of a text file without trailing newline characters.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

/// Like [`read_lines`] but drops blank lines.
pub fn read_sentences(path: &Path) -> Result<Vec<String>> {
    Ok(read_lines(path)?.into_iter().filter(|l| !l.trim().is_empty()).collect())
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn save_tokenizer(dir: &Path, tok: &Tokenizer) -> Result<()> {
    write(&dir.join(CODES_FILE), tok.codes.to_text())?;
    write(&dir.join(VOCAB_FILE), tok.vocab.to_text())
}

pub fn load_tokenizer(dir: &Path) -> Result<Tokenizer> {
    let codes = BpeCodes::from_text(&read_text(&dir.join(CODES_FILE))?)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.join(CODES_FILE).display())))?;
    let vocab = Vocab::from_text(&read_text(&dir.join(VOCAB_FILE))?)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.join(VOCAB_FILE).display())))?;
    Ok(Tokenizer::new(codes, vocab))
}

/// Regular files under `dir`, recursively, as sorted relative paths.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = entry.map_err(|e| CliError::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// Requires `path` to exist, naming the config key otherwise.
/// Absolute form of `base/path`, canonical when the target exists.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    let joined = base.join(path);
    fs::canonicalize(&joined)
        .or_else(|_| std::path::absolute(&joined))
        .unwrap_or(joined)
}

pub fn require_exists(key: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!("{key}: {} does not exist", path.display())))
    }
}
