//! Pseudo-perplexity scoring, minimal-pair judgment and accuracy aggregation.

mod suites;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{sentence_logprobs, ModelError, ModelParams, Sequence};
use crate::tensor::Real;
use crate::tokenizer::Tokenizer;

pub use suites::{load_suite_dir, parse_suite_jsonl, CategoryMap, SuiteRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sentence {0:?} has no subword units to score")]
    EmptySentence(String),
    #[error("suite {0} has no pairs")]
    EmptySuite(String),
    #[error("no suites to evaluate")]
    NoSuites,
    #[error("suite sets differ: {0}")]
    SuiteMismatch(String),
    #[error("duplicate epoch {0} in trajectory")]
    DuplicateEpoch(u32),
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Coarse linguistic category of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "morphology")]
    Morphology,
    #[serde(rename = "syntax")]
    Syntax,
    #[serde(rename = "semantics")]
    Semantics,
    #[serde(rename = "syntax&semantics", alias = "syntax_semantics", alias = "syntax-semantics")]
    SyntaxSemantics,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Morphology,
        Category::Syntax,
        Category::Semantics,
        Category::SyntaxSemantics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Morphology => "morphology",
            Category::Syntax => "syntax",
            Category::Semantics => "semantics",
            Category::SyntaxSemantics => "syntax&semantics",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "morphology" => Ok(Category::Morphology),
            "syntax" => Ok(Category::Syntax),
            "semantics" => Ok(Category::Semantics),
            "syntax&semantics" | "syntax_semantics" | "syntax-semantics" | "syntax & semantics" => {
                Ok(Category::SyntaxSemantics)
            }
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub sentence_good: String,
    pub sentence_bad: String,
    pub suite_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub suite_id: String,
    pub category: Option<Category>,
    pub pairs: Vec<MinimalPair>,
}

/// Source of masked log-probabilities for sentences.
pub trait Scorer: Sync {
    /// `log p(w_t | s with w_t masked)` for every scored unit of `sentence`.
    fn unit_logprobs(&self, sentence: &str) -> Result<Vec<f64>, EvalError>;
}

/// Scores single sentences with a model: `[BOS] subwords [EOS]` in one
/// language; the markers are context only and are not scored.
pub struct ModelScorer<'a, T: Real> {
    pub params: &'a ModelParams<T>,
    pub tokenizer: &'a Tokenizer,
    pub lang: u32,
}

impl<T: Real> Scorer for ModelScorer<'_, T> {
    fn unit_logprobs(&self, sentence: &str) -> Result<Vec<f64>, EvalError> {
        let ids = self.tokenizer.encode_line(sentence);
        if ids.is_empty() {
            return Err(EvalError::EmptySentence(sentence.to_string()));
        }
        let (seq, _) = Sequence::single(&ids, self.lang, self.params.config.max_positions);
        let positions: Vec<usize> = (1..seq.len() - 1).collect();
        Ok(sentence_logprobs(self.params, &seq, &positions)?
            .into_iter()
            .map(Real::f64)
            .collect())
    }
}

/// `exp(-mean log p)`.
pub fn pppl_from_logprobs(logprobs: &[f64]) -> Option<f64> {
    if logprobs.is_empty() {
        return None;
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Some((-mean).exp())
}

pub fn pppl<S: Scorer + ?Sized>(scorer: &S, sentence: &str) -> Result<f64, EvalError> {
    pppl_from_logprobs(&scorer.unit_logprobs(sentence)?).ok_or_else(|| EvalError::EmptySentence(sentence.into()))
}

/// Correct iff the grammatical sentence is strictly less perplexing.
pub fn judge(pppl_good: f64, pppl_bad: f64) -> bool {
    pppl_good < pppl_bad
}

pub fn judge_pair<S: Scorer + ?Sized>(scorer: &S, pair: &MinimalPair) -> Result<bool, EvalError> {
    Ok(judge(pppl(scorer, &pair.sentence_good)?, pppl(scorer, &pair.sentence_bad)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteScore {
    pub suite_id: String,
    pub category: Option<Category>,
    /// Percent correct (0-100), or a difference of such values.
    pub accuracy: f64,
    pub pairs: usize,
    pub correct: usize,
}

/// Identity of the model a report describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub checkpoint: Option<String>,
    #[serde(default)]
    pub epoch: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub l1: Option<String>,
    #[serde(default)]
    pub regime: Option<String>,
    #[serde(default)]
    pub pretrained: Option<bool>,
    #[serde(default = "default_unit")]
    pub length_unit: String,
}

fn default_unit() -> String {
    "subword".into()
}

impl Default for ReportMeta {
    fn default() -> Self {
        Self {
            model: String::new(),
            checkpoint: None,
            epoch: None,
            seed: None,
            l1: None,
            regime: None,
            pretrained: None,
            length_unit: default_unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub suites: Vec<SuiteScore>,
    /// Unweighted mean over the suites of each category.
    pub categories: BTreeMap<Category, f64>,
    /// Unweighted mean over all suites.
    pub overall: f64,
}

fn macro_mean(values: &[f64]) -> Option<f64> {
    crate::stats::macro_mean(values).ok()
}

impl EvalReport {
    /// Aggregates per-suite scores into category and overall means.
    pub fn from_suites(meta: ReportMeta, suites: Vec<SuiteScore>) -> Result<Self, EvalError> {
        let overall = macro_mean(&suites.iter().map(|s| s.accuracy).collect::<Vec<_>>()).ok_or(EvalError::NoSuites)?;
        let mut by_cat: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
        for s in &suites {
            if let Some(c) = s.category {
                by_cat.entry(c).or_default().push(s.accuracy);
            }
        }
        let categories = by_cat
            .into_iter()
            .map(|(c, v)| (c, macro_mean(&v).expect("non-empty")))
            .collect();
        Ok(Self {
            meta,
            suites,
            categories,
            overall,
        })
    }

    pub fn suite(&self, id: &str) -> Option<&SuiteScore> {
        self.suites.iter().find(|s| s.suite_id == id)
    }

    fn suite_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.suites.iter().map(|s| s.suite_id.as_str()).collect();
        ids.sort_unstable();
        ids
    }
}

/// Judges every pair of every suite.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, suites: &[TestSuite], meta: ReportMeta) -> Result<EvalReport, EvalError> {
    if suites.is_empty() {
        return Err(EvalError::NoSuites);
    }
    let mut scores = Vec::with_capacity(suites.len());
    for suite in suites {
        if suite.pairs.is_empty() {
            return Err(EvalError::EmptySuite(suite.suite_id.clone()));
        }
        let verdicts: Vec<bool> = suite
            .pairs
            .par_iter()
            .map(|p| judge_pair(scorer, p))
            .collect::<Result<_, _>>()?;
        let correct = verdicts.iter().filter(|&&v| v).count();
        scores.push(SuiteScore {
            suite_id: suite.suite_id.clone(),
            category: suite.category,
            accuracy: 100.0 * correct as f64 / suite.pairs.len() as f64,
            pairs: suite.pairs.len(),
            correct,
        });
    }
    EvalReport::from_suites(meta, scores)
}

/// Suite-wise mean of reports over the same suites, e.g. across seeds.
/// Pair counts are summed; metadata comes from the first report without a
/// seed or checkpoint.
pub fn mean_report(reports: &[&EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoSuites)?;
    let ids = first.suite_ids();
    if let Some(r) = reports.iter().find(|r| r.suite_ids() != ids) {
        return Err(EvalError::SuiteMismatch(format!("{:?} vs {:?}", ids, r.suite_ids())));
    }
    let suites = first
        .suites
        .iter()
        .map(|s| {
            let all: Vec<&SuiteScore> = reports.iter().map(|r| r.suite(&s.suite_id).expect("same suite set")).collect();
            SuiteScore {
                suite_id: s.suite_id.clone(),
                category: s.category,
                accuracy: macro_mean(&all.iter().map(|x| x.accuracy).collect::<Vec<_>>()).expect("non-empty"),
                pairs: all.iter().map(|x| x.pairs).sum(),
                correct: all.iter().map(|x| x.correct).sum(),
            }
        })
        .collect();
    let meta = ReportMeta {
        seed: None,
        checkpoint: None,
        ..first.meta.clone()
    };
    EvalReport::from_suites(meta, suites)
}

/// Element-wise `with - without` over suites, categories and overall.
pub fn delta(with: &EvalReport, without: &EvalReport) -> Result<EvalReport, EvalError> {
    if with.suite_ids() != without.suite_ids() {
        return Err(EvalError::SuiteMismatch(format!(
            "{:?} vs {:?}",
            with.suite_ids(),
            without.suite_ids()
        )));
    }
    let suites = with
        .suites
        .iter()
        .map(|s| {
            let other = without.suite(&s.suite_id).expect("same suite set");
            SuiteScore {
                suite_id: s.suite_id.clone(),
                category: s.category,
                accuracy: s.accuracy - other.accuracy,
                pairs: 0,
                correct: 0,
            }
        })
        .collect();
    let meta = ReportMeta {
        model: format!("delta({}, {})", with.meta.model, without.meta.model),
        l1: with.meta.l1.clone(),
        regime: with.meta.regime.clone(),
        ..ReportMeta::default()
    };
    let mut out = EvalReport::from_suites(meta, suites)?;
    out.overall = with.overall - without.overall;
    Ok(out)
}

/// Per-L1 category means of Δ reports plus the per-category mean over L1s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    pub categories: Vec<Category>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    pub average: Vec<Option<f64>>,
}

pub fn category_gain_table(deltas: &[(String, EvalReport)]) -> CategoryTable {
    let categories: Vec<Category> = Category::ALL
        .into_iter()
        .filter(|c| deltas.iter().any(|(_, r)| r.categories.contains_key(c)))
        .collect();
    let rows: Vec<(String, Vec<Option<f64>>)> = deltas
        .iter()
        .map(|(l1, r)| (l1.clone(), categories.iter().map(|c| r.categories.get(c).copied()).collect()))
        .collect();
    let average = (0..categories.len())
        .map(|j| macro_mean(&rows.iter().filter_map(|(_, v)| v[j]).collect::<Vec<_>>()))
        .collect();
    CategoryTable {
        categories,
        rows,
        average,
    }
}

/// Reports over checkpoints, ordered by epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<(u32, EvalReport)>,
}

impl Trajectory {
    pub fn epochs(&self) -> Vec<u32> {
        self.points.iter().map(|(e, _)| *e).collect()
    }

    /// `(epoch, accuracy)` series of one suite.
    pub fn series(&self, suite_id: &str) -> Vec<(u32, f64)> {
        self.points
            .iter()
            .filter_map(|(e, r)| r.suite(suite_id).map(|s| (*e, s.accuracy)))
            .collect()
    }

    pub fn overall(&self) -> Vec<(u32, f64)> {
        self.points.iter().map(|(e, r)| (*e, r.overall)).collect()
    }
}

pub fn trajectory(mut points: Vec<(u32, EvalReport)>) -> Result<Trajectory, EvalError> {
    points.sort_by_key(|(e, _)| *e);
    if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(EvalError::DuplicateEpoch(w[0].0));
    }
    if let Some((_, first)) = points.first() {
        let ids = first.suite_ids();
        if let Some((e, _)) = points.iter().find(|(_, r)| r.suite_ids() != ids) {
            return Err(EvalError::SuiteMismatch(format!("epoch {e} has a different suite set")));
        }
    }
    Ok(Trajectory { points })
}

/// Scores every checkpoint on the same suites and orders the result.
pub fn trajectory_of<S, I>(checkpoints: I, suites: &[TestSuite]) -> Result<Trajectory, EvalError>
where
    S: Scorer,
    I: IntoIterator<Item = (u32, S, ReportMeta)>,
{
    let mut points = Vec::new();
    for (epoch, scorer, meta) in checkpoints {
        points.push((epoch, evaluate(&scorer, suites, meta)?));
    }
    trajectory(points)
}
