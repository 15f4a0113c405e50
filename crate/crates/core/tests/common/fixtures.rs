//! Loaders for the table fixtures under `tests/fixtures`.

use std::collections::BTreeMap;

use l2lab::eval::{Category, EvalReport, ReportMeta, SuiteScore};
use serde::Deserialize;

fn read(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Stored overall scores per regime and L1, one report each.
pub fn settings_reports() -> Vec<EvalReport> {
    serde_json::from_str(&read("settings_reports.json")).unwrap()
}

#[derive(Deserialize)]
struct Phenomenon {
    suite_id: String,
    category: Category,
}

#[derive(Deserialize)]
struct BlimpByL1 {
    phenomena: Vec<Phenomenon>,
    accuracy: Vec<(String, Vec<f64>)>,
    overall: Vec<(String, f64)>,
}

/// Per-phenomenon accuracies of the pretrained drop-regime models, built into
/// reports, with the published overall score of each.
pub fn blimp_reports() -> Vec<(String, EvalReport, f64)> {
    let f: BlimpByL1 = serde_json::from_str(&read("blimp_by_l1.json")).unwrap();
    let published: BTreeMap<String, f64> = f.overall.into_iter().collect();
    f.accuracy
        .into_iter()
        .map(|(l1, acc)| {
            let suites = f
                .phenomena
                .iter()
                .zip(&acc)
                .map(|(p, &a)| SuiteScore {
                    suite_id: p.suite_id.clone(),
                    category: Some(p.category),
                    accuracy: a,
                    pairs: 0,
                    correct: 0,
                })
                .collect();
            let meta = ReportMeta {
                l1: Some(l1.clone()),
                regime: Some("drop".into()),
                pretrained: Some(true),
                ..ReportMeta::default()
            };
            let want = published[&l1];
            (l1, EvalReport::from_suites(meta, suites).unwrap(), want)
        })
        .collect()
}

#[derive(Deserialize)]
pub struct CategoryGains {
    pub categories: Vec<Category>,
    pub rows: Vec<(String, Vec<f64>)>,
    pub average: Vec<f64>,
}

pub fn category_gains() -> CategoryGains {
    serde_json::from_str(&read("category_gains.json")).unwrap()
}

/// Δ reports carrying only per-category values.
pub fn category_delta_reports(g: &CategoryGains) -> Vec<(String, EvalReport)> {
    g.rows
        .iter()
        .map(|(l1, vals)| {
            let report = EvalReport {
                meta: ReportMeta {
                    l1: Some(l1.clone()),
                    ..ReportMeta::default()
                },
                suites: Vec::new(),
                categories: g.categories.iter().copied().zip(vals.iter().copied()).collect(),
                overall: 0.0,
            };
            (l1.clone(), report)
        })
        .collect()
}
