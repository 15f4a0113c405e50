use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Category, EvalError, MinimalPair, TestSuite};

/// One JSON line of a suite file. BLiMP release fields are accepted as
/// fallbacks for `suite_id` and `category`.
#[derive(Debug, Clone, Deserialize)]
pub struct SuiteRecord {
    pub sentence_good: String,
    pub sentence_bad: String,
    #[serde(default)]
    pub suite_id: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default, rename = "UID")]
    pub uid: Option<String>,
    #[serde(default)]
    pub linguistics_term: Option<String>,
    #[serde(default)]
    pub field: Option<String>,
}

/// Benchmark metadata: paradigm or suite name → (suite, category).
///
/// File format: tab-separated `key suite category`, `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    entries: BTreeMap<String, (String, Category)>,
}

impl CategoryMap {
    pub fn parse(text: &str, path: &str) -> Result<Self, EvalError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| EvalError::Parse {
                path: path.to_string(),
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [key, suite, cat] = cols[..] else {
                return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
            };
            let cat: Category = cat.parse().map_err(err)?;
            if entries.insert(key.to_string(), (suite.to_string(), cat)).is_some() {
                return Err(err(format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn suite_of(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(s, _)| s.as_str())
    }

    pub fn category_of(&self, key: &str) -> Option<Category> {
        self.entries.get(key).map(|(_, c)| *c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses one JSONL file into pairs grouped by suite. `default_suite` names
/// records that carry no suite information.
pub fn parse_suite_jsonl(
    text: &str,
    path: &str,
    default_suite: &str,
    map: &CategoryMap,
) -> Result<Vec<TestSuite>, EvalError> {
    let mut suites: BTreeMap<String, TestSuite> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        let rec: SuiteRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if rec.sentence_good.trim().is_empty() || rec.sentence_bad.trim().is_empty() {
            return Err(err("empty sentence".into()));
        }
        if rec.sentence_good == rec.sentence_bad {
            return Err(err("good and bad sentences are identical".into()));
        }
        let suite_id = rec
            .suite_id
            .clone()
            .or_else(|| rec.uid.as_deref().and_then(|u| map.suite_of(u)).map(String::from))
            .or_else(|| rec.linguistics_term.clone())
            .unwrap_or_else(|| default_suite.to_string());
        let category = match &rec.category {
            Some(c) => Some(c.parse::<Category>().map_err(err)?),
            None => map
                .category_of(&suite_id)
                .or_else(|| rec.uid.as_deref().and_then(|u| map.category_of(u)))
                .or_else(|| rec.field.as_deref().and_then(|f| f.parse().ok())),
        };
        let suite = suites.entry(suite_id.clone()).or_insert_with(|| TestSuite {
            suite_id: suite_id.clone(),
            category,
            pairs: Vec::new(),
        });
        if suite.category.is_none() {
            suite.category = category;
        } else if category.is_some() && suite.category != category {
            return Err(err(format!("suite {suite_id} has conflicting categories")));
        }
        suite.pairs.push(MinimalPair {
            sentence_good: rec.sentence_good,
            sentence_bad: rec.sentence_bad,
            suite_id,
        });
    }
    Ok(suites.into_values().collect())
}

/// Loads every `*.jsonl` file under `dir` (sorted by name) and merges pairs
/// that belong to the same suite. Suites come back sorted by id.
pub fn load_suite_dir(dir: &Path, map: &CategoryMap) -> Result<Vec<TestSuite>, EvalError> {
    let io = |source| EvalError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut merged: BTreeMap<String, TestSuite> = BTreeMap::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|source| EvalError::Io {
            path: file.display().to_string(),
            source,
        })?;
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("suite");
        for suite in parse_suite_jsonl(&text, &file.display().to_string(), stem, map)? {
            match merged.get_mut(&suite.suite_id) {
                Some(existing) => {
                    if existing.category != suite.category {
                        return Err(EvalError::Parse {
                            path: file.display().to_string(),
                            line: 0,
                            message: format!("suite {} has conflicting categories", suite.suite_id),
                        });
                    }
                    existing.pairs.extend(suite.pairs);
                }
                None => {
                    merged.insert(suite.suite_id.clone(), suite);
                }
            }
        }
    }
    if merged.is_empty() {
        return Err(EvalError::NoSuites);
    }
    Ok(merged.into_values().collect())
}
