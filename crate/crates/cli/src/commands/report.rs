use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use l2lab::eval::{category_gain_table, delta, mean_report, trajectory, EvalReport, Trajectory};
use l2lab::report::{category_table, delta_table, settings_table, trajectory_csv, trajectory_svg, Table};

use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Serialize)]
struct Source {
    file: String,
    model: String,
    checkpoint: Option<String>,
    epoch: Option<u32>,
    seed: Option<u64>,
}

/// Reads reports from files and from `*.json` files under directories.
pub fn load_reports(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, EvalReport)>> {
    let mut out = Vec::new();
    for input in inputs {
        files::require_exists("report input", input)?;
        if input.is_dir() {
            for rel in files::list_files(input)? {
                if rel.extension().is_some_and(|x| x == "json") {
                    let path = input.join(rel);
                    match serde_json::from_str::<EvalReport>(&files::read_text(&path)?) {
                        Ok(r) => out.push((path, r)),
                        Err(e) => log::debug!("skipping {}: {e}", path.display()),
                    }
                }
            }
        } else {
            out.push((input.clone(), files::read_json(input)?));
        }
    }
    if out.is_empty() {
        return Err(CliError::config("no reports found"));
    }
    Ok(out)
}

/// Last-epoch report of every model, in input order.
fn final_reports(reports: &[(PathBuf, EvalReport)]) -> Vec<&EvalReport> {
    let mut best: Vec<&EvalReport> = Vec::new();
    for (_, r) in reports {
        match best.iter_mut().find(|b| !r.meta.model.is_empty() && b.meta.model == r.meta.model) {
            Some(b) if b.meta.epoch < r.meta.epoch => *b = r,
            Some(_) => {}
            None => best.push(r),
        }
    }
    best
}

fn write_table(out: &Path, name: &str, t: &Table) -> Result<String> {
    files::write(&out.join(format!("{name}.csv")), t.to_csv())?;
    let md = t.to_markdown();
    files::write(&out.join(format!("{name}.md")), &md)?;
    Ok(md)
}

fn group_by_l1<'a>(reports: &[&'a EvalReport]) -> Vec<(String, Vec<&'a EvalReport>)> {
    let mut groups: Vec<(String, Vec<&EvalReport>)> = Vec::new();
    for r in reports {
        let l1 = r.meta.l1.clone().unwrap_or_default();
        match groups.iter_mut().find(|(k, _)| *k == l1) {
            Some((_, v)) => v.push(r),
            None => groups.push((l1, vec![r])),
        }
    }
    groups
}

fn delta_reports(finals: &[&EvalReport], regime: &str) -> Result<Vec<(String, EvalReport)>> {
    let of = |pretrained: bool| -> Vec<&EvalReport> {
        finals
            .iter()
            .copied()
            .filter(|r| r.meta.regime.as_deref() == Some(regime) && r.meta.pretrained == Some(pretrained))
            .collect()
    };
    let without = group_by_l1(&of(false));
    let mut out = Vec::new();
    for (l1, with) in group_by_l1(&of(true)) {
        if let Some((_, base)) = without.iter().find(|(k, _)| *k == l1) {
            out.push((l1, delta(&mean_report(&with)?, &mean_report(base)?)?));
        }
    }
    Ok(out)
}

fn trajectories(reports: &[(PathBuf, EvalReport)]) -> Result<Vec<(String, Trajectory)>> {
    let mut groups: BTreeMap<(String, String, bool), BTreeMap<u32, Vec<&EvalReport>>> = BTreeMap::new();
    for (_, r) in reports {
        let (Some(epoch), Some(regime)) = (r.meta.epoch, r.meta.regime.clone()) else {
            continue;
        };
        let key = (r.meta.l1.clone().unwrap_or_default(), regime, r.meta.pretrained.unwrap_or(true));
        groups.entry(key).or_default().entry(epoch).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((l1, regime, pretrained), by_epoch) in groups {
        if by_epoch.len() < 2 {
            continue;
        }
        let points = by_epoch
            .into_iter()
            .map(|(e, rs)| Ok((e, mean_report(&rs)?)))
            .collect::<Result<Vec<_>>>()?;
        let label = format!("{l1} {regime}{}", if pretrained { "" } else { " scratch" });
        out.push((label.trim().to_string(), trajectory(points)?));
    }
    Ok(out)
}

/// Renders every table and chart the inputs support into `out`.
pub fn run(inputs: &[PathBuf], out: &Path, regime: &str) -> Result<String> {
    let mut reports = load_reports(inputs)?;
    reports.sort_by(|a, b| a.0.cmp(&b.0));
    fn suite_set(r: &EvalReport) -> Vec<&str> {
        let mut ids: Vec<&str> = r.suites.iter().map(|s| s.suite_id.as_str()).collect();
        ids.sort_unstable();
        ids
    }
    let want = suite_set(&reports[0].1);
    if let Some((p, _)) = reports.iter().find(|(_, r)| suite_set(r) != want) {
        return Err(CliError::config(format!(
            "{} covers different suites than {}",
            p.display(),
            reports[0].0.display()
        )));
    }
    let finals = final_reports(&reports);
    let mut summary = String::new();

    let pretrained: Vec<EvalReport> = finals
        .iter()
        .filter(|r| r.meta.pretrained != Some(false) && r.meta.regime.is_some() && r.meta.l1.is_some())
        .map(|r| (*r).clone())
        .collect();
    if !pretrained.is_empty() {
        summary.push_str("## Settings\n\n");
        summary.push_str(&write_table(out, "settings", &settings_table(&pretrained)?)?);
    }

    let deltas = delta_reports(&finals, regime)?;
    if !deltas.is_empty() {
        summary.push_str(&format!("\n## Gain from L1 pretraining ({regime})\n\n"));
        summary.push_str(&write_table(out, "delta", &delta_table(&deltas)?)?);
        let cats = category_gain_table(&deltas);
        if !cats.categories.is_empty() {
            summary.push_str("\n## Gain by category\n\n");
            summary.push_str(&write_table(out, "categories", &category_table(&cats))?);
        }
    }

    let series = trajectories(&reports)?;
    match trajectory_svg(&series) {
        Some(svg) => {
            files::write(&out.join("trajectories.svg"), svg)?;
            files::write(&out.join("trajectories.csv"), trajectory_csv(&series))?;
        }
        None => log::warn!("no run has reports at two or more epochs; no trajectory chart written"),
    }

    let sources: Vec<Source> = reports
        .iter()
        .map(|(p, r)| Source {
            file: p.display().to_string(),
            model: r.meta.model.clone(),
            checkpoint: r.meta.checkpoint.clone(),
            epoch: r.meta.epoch,
            seed: r.meta.seed,
        })
        .collect();
    files::write_json(&out.join("sources.json"), &sources)?;
    if summary.is_empty() {
        log::warn!("reports carry no l1/regime metadata; only sources.json was written");
    }
    Ok(summary)
}
