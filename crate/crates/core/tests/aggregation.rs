mod common;

use std::collections::HashMap;

use l2lab::eval::{
    category_gain_table, delta, evaluate, Category, EvalError, EvalReport, MinimalPair, ReportMeta, Scorer,
    SuiteScore, TestSuite,
};
use l2lab::report::{category_table, settings_table};
use proptest::prelude::*;

use common::fixtures;

/// Log-probabilities looked up by sentence.
struct HandScored(HashMap<&'static str, Vec<f64>>);

impl Scorer for HandScored {
    fn unit_logprobs(&self, sentence: &str) -> Result<Vec<f64>, EvalError> {
        Ok(self.0[sentence].clone())
    }
}

#[test]
fn four_hand_scored_pairs_give_seventy_five() {
    let scorer = HandScored(HashMap::from([
        ("g1", vec![-1.0, -1.0]),
        ("b1", vec![-2.0, -2.0]),
        ("g2", vec![-0.5]),
        ("b2", vec![-0.5, -3.0]),
        ("g3", vec![-1.0, -3.0]),
        ("b3", vec![-2.5, -2.5]),
        // Equal scores: the tie counts against the model.
        ("g4", vec![-1.5]),
        ("b4", vec![-1.0, -2.0]),
    ]));
    let pairs = (1..=4)
        .map(|i| MinimalPair {
            sentence_good: ["g1", "g2", "g3", "g4"][i - 1].into(),
            sentence_bad: ["b1", "b2", "b3", "b4"][i - 1].into(),
            suite_id: "fixture".into(),
        })
        .collect();
    let suite = TestSuite {
        suite_id: "fixture".into(),
        category: Some(Category::Syntax),
        pairs,
    };
    let r = evaluate(&scorer, &[suite], ReportMeta::default()).unwrap();
    assert_eq!(r.suites[0].correct, 3);
    assert_eq!(r.suites[0].accuracy, 75.0);
    assert_eq!(r.overall, 75.0);
}

#[test]
fn phenomenon_accuracies_reproduce_published_overall() {
    for (l1, report, published) in fixtures::blimp_reports() {
        assert!(
            (report.overall - published).abs() <= 0.05,
            "{l1}: {} vs {published}",
            report.overall
        );
    }
}

#[test]
fn category_average_row() {
    let g = fixtures::category_gains();
    let t = category_gain_table(&fixtures::category_delta_reports(&g));
    assert_eq!(t.categories, g.categories);
    for (got, want) in t.average.iter().zip(&g.average) {
        assert!((got.unwrap() - want).abs() <= 0.05, "{got:?} vs {want}");
    }
    let csv = category_table(&t).to_csv();
    assert_eq!(csv.lines().last(), Some("Avg.,3.5,4.8,1.6,0.7"));
}

#[test]
fn settings_table_from_stored_reports() {
    let t = settings_table(&fixtures::settings_reports()).unwrap();
    assert_eq!(
        t.to_csv(),
        "regime,Fr,De,Ru,Ja\nnopara,52.0,57.6,51.2,52.5\npara,51.1,53.6,48.9,51.3\ndrop,58.0,61.1,52.8,56.2\n"
    );
}

#[test]
fn rendering_survives_a_storage_round_trip() {
    let reports = fixtures::settings_reports();
    let stored = serde_json::to_string(&reports).unwrap();
    let reloaded: Vec<EvalReport> = serde_json::from_str(&stored).unwrap();
    assert_eq!(
        settings_table(&reports).unwrap().to_csv(),
        settings_table(&reloaded).unwrap().to_csv()
    );
}

fn scores() -> impl Strategy<Value = Vec<SuiteScore>> {
    proptest::collection::vec((1usize..50, 0.0f64..1.0, 0usize..4), 1..10).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (pairs, frac, cat))| {
                let correct = (frac * pairs as f64).floor() as usize;
                SuiteScore {
                    suite_id: format!("s{i}"),
                    category: Some(Category::ALL[cat]),
                    accuracy: 100.0 * correct as f64 / pairs as f64,
                    pairs,
                    correct,
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn overall_is_the_unweighted_suite_mean(s in scores()) {
        let r = EvalReport::from_suites(ReportMeta::default(), s.clone()).unwrap();
        let mean = s.iter().map(|x| x.accuracy).sum::<f64>() / s.len() as f64;
        prop_assert!((r.overall - mean).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&r.overall));
        for (c, v) in &r.categories {
            let members: Vec<f64> = s.iter().filter(|x| x.category == Some(*c)).map(|x| x.accuracy).collect();
            prop_assert!((v - members.iter().sum::<f64>() / members.len() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_is_antisymmetric(a in scores(), shift in -20.0f64..20.0) {
        let b: Vec<SuiteScore> = a.iter().map(|x| SuiteScore { accuracy: (x.accuracy + shift).clamp(0.0, 100.0), ..x.clone() }).collect();
        let ra = EvalReport::from_suites(ReportMeta::default(), a).unwrap();
        let rb = EvalReport::from_suites(ReportMeta::default(), b).unwrap();
        let ab = delta(&ra, &rb).unwrap();
        let ba = delta(&rb, &ra).unwrap();
        prop_assert!((ab.overall + ba.overall).abs() < 1e-9);
        for (x, y) in ab.suites.iter().zip(&ba.suites) {
            prop_assert!((x.accuracy + y.accuracy).abs() < 1e-9);
        }
    }
}
