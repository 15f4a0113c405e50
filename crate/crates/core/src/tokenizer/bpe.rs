//! Byte-pair-encoding merge learning and application.
//!
//! Words are split into characters followed by a separate end-of-word symbol
//! `</w>`. The marker participates in merges like any other symbol (so `b`
//! followed by `</w>` can become `b</w>`). When a segmented word is rendered,
//! a marker still standing on its own is glued onto the preceding unit, so
//! every rendered word ends in exactly one unit carrying the `</w>` suffix.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::rc::Rc;

use super::TokenizerError;

/// End-of-word marker appended to the last unit of every word.
pub const END_OF_WORD: &str = "</w>";

/// Ordered merge rules. The rank of a rule is its index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeCodes {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeCodes {
    pub fn new(merges: Vec<(String, String)>) -> Result<Self, TokenizerError> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, pair) in merges.iter().enumerate() {
            if ranks.insert(pair.clone(), rank).is_some() {
                return Err(TokenizerError::DuplicateMerge {
                    left: pair.0.clone(),
                    right: pair.1.clone(),
                });
            }
        }
        Ok(Self { merges, ranks })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(&(left.to_string(), right.to_string())).copied()
    }

    pub fn contains(&self, pair: &(String, String)) -> bool {
        self.ranks.contains_key(pair)
    }

    /// Appends `extra` after the existing rules, dropping rules already present.
    pub fn extended_with(&self, extra: &BpeCodes) -> BpeCodes {
        let mut merges = self.merges.clone();
        let mut ranks = self.ranks.clone();
        for pair in &extra.merges {
            if !ranks.contains_key(pair) {
                ranks.insert(pair.clone(), merges.len());
                merges.push(pair.clone());
            }
        }
        BpeCodes { merges, ranks }
    }

    /// Codes file: one `LEFT RIGHT` rule per line, rank = line number.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let mut merges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(TokenizerError::Parse {
                        line: lineno + 1,
                        message: format!("expected `LEFT RIGHT`, got {line:?}"),
                    })
                }
            }
        }
        Self::new(merges)
    }

    /// Segments one word into symbols (marker still separate if unmerged).
    fn segment_symbols(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        symbols.push(END_OF_WORD.to_string());
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Segments one word into rendered units; the last unit ends with `</w>`.
    pub fn apply_word(&self, word: &str) -> Vec<String> {
        let mut symbols = self.segment_symbols(word);
        if symbols.len() >= 2 && symbols.last().map(String::as_str) == Some(END_OF_WORD) {
            symbols.pop();
            if let Some(last) = symbols.last_mut() {
                last.push_str(END_OF_WORD);
            }
        }
        symbols
    }
}

/// Segments a whitespace-tokenized line into subword units.
pub fn apply_bpe(codes: &BpeCodes, line: &str) -> Vec<String> {
    line.split_whitespace()
        .flat_map(|w| codes.apply_word(w))
        .collect()
}

/// Segments many lines, caching the segmentation of repeated words.
pub fn apply_bpe_corpus<S: AsRef<str>>(codes: &BpeCodes, lines: &[S]) -> Vec<Vec<String>> {
    let mut cache: HashMap<String, Vec<String>> = HashMap::new();
    lines
        .iter()
        .map(|line| {
            let mut out = Vec::new();
            for word in line.as_ref().split_whitespace() {
                let units = cache
                    .entry(word.to_string())
                    .or_insert_with(|| codes.apply_word(word));
                out.extend(units.iter().cloned());
            }
            out
        })
        .collect()
}

/// Inverse of [`apply_bpe`]: joins units and restores single-space word breaks.
pub fn detokenize<S: AsRef<str>>(units: &[S]) -> String {
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    for unit in units {
        let unit = unit.as_ref();
        if let Some(stem) = unit.strip_suffix(END_OF_WORD) {
            current.push_str(stem);
            words.push(std::mem::take(&mut current));
        } else {
            current.push_str(unit);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words.join(" ")
}

type Sym = u32;

struct SymbolTable {
    strings: Vec<Rc<str>>,
    ids: HashMap<Rc<str>, Sym>,
}

impl SymbolTable {
    fn new() -> Self {
        Self {
            strings: Vec::new(),
            ids: HashMap::new(),
        }
    }

    fn intern(&mut self, s: &str) -> Sym {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let rc: Rc<str> = Rc::from(s);
        let id = self.strings.len() as Sym;
        self.strings.push(rc.clone());
        self.ids.insert(rc, id);
        id
    }

    fn get(&self, id: Sym) -> &Rc<str> {
        &self.strings[id as usize]
    }
}

type HeapEntry = (u64, Reverse<(Rc<str>, Rc<str>)>, (Sym, Sym));

/// Learns `num_merges` merge rules from a whitespace-tokenized corpus.
///
/// At every step the most frequent adjacent symbol pair is merged; ties go to
/// the lexicographically smallest `(left, right)`. Learning stops early when
/// no pair is left.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], num_merges: usize) -> Result<BpeCodes, TokenizerError> {
    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *word_counts.entry(w).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut sorted: Vec<(&str, u64)> = word_counts.into_iter().collect();
    sorted.sort_unstable();

    let mut table = SymbolTable::new();
    let eow = table.intern(END_OF_WORD);
    let mut words: Vec<Vec<Sym>> = Vec::with_capacity(sorted.len());
    let counts: Vec<u64> = sorted.iter().map(|&(_, c)| c).collect();
    for &(w, _) in &sorted {
        let mut syms: Vec<Sym> = w.chars().map(|c| table.intern(c.encode_utf8(&mut [0; 4]))).collect();
        syms.push(eow);
        words.push(syms);
    }

    let mut pair_counts: HashMap<(Sym, Sym), u64> = HashMap::new();
    let mut occurrences: HashMap<(Sym, Sym), HashSet<usize>> = HashMap::new();
    for (wi, syms) in words.iter().enumerate() {
        for p in syms.windows(2) {
            let key = (p[0], p[1]);
            *pair_counts.entry(key).or_default() += counts[wi];
            occurrences.entry(key).or_default().insert(wi);
        }
    }

    let entry = |table: &SymbolTable, key: (Sym, Sym), count: u64| -> HeapEntry {
        (
            count,
            Reverse((table.get(key.0).clone(), table.get(key.1).clone())),
            key,
        )
    };
    let mut heap: BinaryHeap<HeapEntry> = pair_counts
        .iter()
        .map(|(&k, &c)| entry(&table, k, c))
        .collect();

    let mut merges = Vec::with_capacity(num_merges);
    while merges.len() < num_merges {
        let Some((count, _, key)) = heap.pop() else { break };
        if count == 0 || pair_counts.get(&key).copied() != Some(count) {
            continue;
        }
        let left = table.get(key.0).clone();
        let right = table.get(key.1).clone();
        let merged = table.intern(&format!("{left}{right}"));
        merges.push((left.to_string(), right.to_string()));

        let mut affected: Vec<usize> = occurrences
            .remove(&key)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        let mut touched: HashSet<(Sym, Sym)> = HashSet::new();
        for wi in affected {
            let syms = &words[wi];
            if !syms.windows(2).any(|p| (p[0], p[1]) == key) {
                continue;
            }
            let wc = counts[wi];
            for p in syms.windows(2) {
                let k = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&k) {
                    *c -= wc;
                }
                touched.insert(k);
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == key {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            for p in out.windows(2) {
                let k = (p[0], p[1]);
                *pair_counts.entry(k).or_default() += wc;
                occurrences.entry(k).or_default().insert(wi);
                touched.insert(k);
            }
            words[wi] = out;
        }
        for k in touched {
            let c = pair_counts.get(&k).copied().unwrap_or(0);
            if c > 0 {
                heap.push(entry(&table, k, c));
            } else {
                pair_counts.remove(&k);
            }
        }
    }
    BpeCodes::new(merges)
}
