//! Table and chart rendering from stored evaluation reports. Values are
//! formatted or averaged, never rescored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::eval::{CategoryTable, EvalReport, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("no reports to render")]
    Empty,
    #[error("report {index} has no {field} in its metadata")]
    MissingMeta { index: usize, field: &'static str },
    #[error("suite sets differ between reports: {0}")]
    SuiteMismatch(String),
}

/// A labelled grid of optional numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = std::iter::once(&self.corner).chain(&self.columns).map(|s| csv_field(s)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (label, vals) in &self.rows {
            let fields: Vec<String> = std::iter::once(csv_field(label)).chain(vals.iter().map(|&v| cell(v))).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} | {} |", self.corner, self.columns.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(self.columns.len()));
        for (label, vals) in &self.rows {
            let cells: Vec<String> = vals.iter().map(|&v| cell(v)).collect();
            let _ = writeln!(out, "| {} | {} |", label, cells.join(" | "));
        }
        out
    }

    pub fn row(&self, label: &str) -> Option<&[Option<f64>]> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, v)| v.as_slice())
    }
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    if !list.iter().any(|x| x == item) {
        list.push(item.to_string());
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    crate::stats::macro_mean(v).ok()
}

/// Overall accuracy by regime (rows) and L1 (columns), averaged over the
/// seeds present. Row and column order follow first appearance.
pub fn settings_table(reports: &[EvalReport]) -> Result<Table, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    check_suite_sets(reports.iter())?;
    let mut regimes = Vec::new();
    let mut l1s = Vec::new();
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (index, r) in reports.iter().enumerate() {
        let regime = r.meta.regime.as_deref().ok_or(ReportError::MissingMeta { index, field: "regime" })?;
        let l1 = r.meta.l1.as_deref().ok_or(ReportError::MissingMeta { index, field: "l1" })?;
        push_unique(&mut regimes, regime);
        push_unique(&mut l1s, l1);
        cells.entry((regime.into(), l1.into())).or_default().push(r.overall);
    }
    let rows = regimes
        .iter()
        .map(|reg| {
            let vals = l1s
                .iter()
                .map(|l1| cells.get(&(reg.clone(), l1.clone())).and_then(|v| mean(v)))
                .collect();
            (reg.clone(), vals)
        })
        .collect();
    Ok(Table {
        corner: "regime".into(),
        columns: l1s,
        rows,
    })
}

/// One row per L1 of Δ reports: per-suite values then Overall.
pub fn delta_table(deltas: &[(String, EvalReport)]) -> Result<Table, ReportError> {
    let (_, first) = deltas.first().ok_or(ReportError::Empty)?;
    check_suite_sets(deltas.iter().map(|(_, r)| r))?;
    let suites: Vec<String> = first.suites.iter().map(|s| s.suite_id.clone()).collect();
    let rows = deltas
        .iter()
        .map(|(l1, r)| {
            let mut vals: Vec<Option<f64>> = suites.iter().map(|id| r.suite(id).map(|s| s.accuracy)).collect();
            vals.push(Some(r.overall));
            (l1.clone(), vals)
        })
        .collect();
    let mut columns = suites;
    columns.push("Overall".into());
    Ok(Table {
        corner: "L1".into(),
        columns,
        rows,
    })
}

/// Category gains per L1 followed by an `Avg.` row.
pub fn category_table(t: &CategoryTable) -> Table {
    let mut rows = t.rows.clone();
    rows.push(("Avg.".into(), t.average.clone()));
    Table {
        corner: "L1".into(),
        columns: t.categories.iter().map(|c| c.to_string()).collect(),
        rows,
    }
}

/// Flat per-suite listing of one report, ending with the overall value.
pub fn report_csv(r: &EvalReport) -> String {
    let mut out = String::from("suite_id,category,accuracy,pairs,correct\n");
    for s in &r.suites {
        let cat = s.category.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.4},{},{}",
            csv_field(&s.suite_id),
            csv_field(&cat),
            s.accuracy,
            s.pairs,
            s.correct
        );
    }
    let _ = writeln!(out, "overall,,{:.4},,", r.overall);
    out
}

/// `run,suite,epoch,accuracy` rows for labelled trajectories, with `overall`
/// as a final pseudo-suite of each run.
pub fn trajectory_csv(series: &[(String, Trajectory)]) -> String {
    let mut out = String::from("run,suite,epoch,accuracy\n");
    for (label, t) in series {
        let label = csv_field(label);
        let Some((_, first)) = t.points.first() else {
            continue;
        };
        for s in &first.suites {
            for (e, acc) in t.series(&s.suite_id) {
                let _ = writeln!(out, "{label},{},{e},{acc:.4}", csv_field(&s.suite_id));
            }
        }
        for (e, acc) in t.overall() {
            let _ = writeln!(out, "{label},overall,{e},{acc:.4}");
        }
    }
    out
}

fn check_suite_sets<'a>(mut reports: impl Iterator<Item = &'a EvalReport>) -> Result<(), ReportError> {
    let Some(first) = reports.next() else {
        return Ok(());
    };
    let ids = |r: &EvalReport| {
        let mut v: Vec<String> = r.suites.iter().map(|s| s.suite_id.clone()).collect();
        v.sort();
        v
    };
    let want = ids(first);
    for r in reports {
        let got = ids(r);
        if got != want {
            return Err(ReportError::SuiteMismatch(format!("{want:?} vs {got:?}")));
        }
    }
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line charts of labelled trajectories, one panel per suite plus an overall
/// panel. The x-axis is linear in epochs with a tick at each checkpoint.
/// Returns `None` when there is nothing to draw.
pub fn trajectory_svg(series: &[(String, Trajectory)]) -> Option<String> {
    let first = series.iter().find_map(|(_, t)| t.points.first().map(|(_, r)| r))?;
    let mut panels: Vec<String> = first.suites.iter().map(|s| s.suite_id.clone()).collect();
    panels.push("overall".into());
    let mut epochs: Vec<u32> = series.iter().flat_map(|(_, t)| t.epochs()).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let max_epoch = f64::from(*epochs.last()?).max(1.0);

    let values: Vec<f64> = series
        .iter()
        .flat_map(|(_, t)| t.points.iter())
        .flat_map(|(_, r)| r.suites.iter().map(|s| s.accuracy).chain([r.overall]))
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = ((lo / 10.0).floor() * 10.0, ((hi / 10.0).ceil() * 10.0).max((lo / 10.0).floor() * 10.0 + 10.0));

    let (pw, ph, margin) = (260.0, 180.0, 40.0);
    let cols = 4usize.min(panels.len());
    let rows = panels.len().div_ceil(cols);
    let legend_h = 20.0 * series.len() as f64 + 10.0;
    let width = cols as f64 * (pw + margin) + margin;
    let height = rows as f64 * (ph + 2.0 * margin) + legend_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let ox = margin + (k % cols) as f64 * (pw + margin);
        let oy = margin + (k / cols) as f64 * (ph + 2.0 * margin);
        let x = |e: f64| ox + e / max_epoch * pw;
        let y = |v: f64| oy + ph - (v - y0) / (y1 - y0) * ph;
        let _ = writeln!(svg, r#"<g class="panel" data-suite="{}">"#, xml_escape(panel));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            ox + pw / 2.0,
            oy - 8.0,
            xml_escape(panel)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{ox}" y="{oy}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for &e in &epochs {
            let xe = x(f64::from(e));
            let _ = writeln!(
                svg,
                r#"<line x1="{xe:.2}" y1="{}" x2="{xe:.2}" y2="{}" stroke="black"/><text x="{xe:.2}" y="{}" text-anchor="middle" font-size="7">{e}</text>"#,
                oy + ph,
                oy + ph + 4.0,
                oy + ph + 13.0
            );
        }
        let mut v = y0;
        while v <= y1 + 1e-9 {
            let yv = y(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{ox}" y1="{yv:.2}" x2="{}" y2="{yv:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{v:.0}</text>"##,
                ox + pw,
                ox - 3.0,
                yv + 3.0
            );
            v += 10.0;
        }
        for (i, (_, t)) in series.iter().enumerate() {
            let pts = if panel == "overall" { t.overall() } else { t.series(panel) };
            if pts.is_empty() {
                continue;
            }
            let path: Vec<String> = pts
                .iter()
                .map(|&(e, a)| format!("{:.2},{:.2}", x(f64::from(e)), y(a)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                PALETTE[i % PALETTE.len()],
                path.join(" ")
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let ly = rows as f64 * (ph + 2.0 * margin) + 5.0;
    for (i, (label, _)) in series.iter().enumerate() {
        let yy = ly + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{margin}" y1="{yy}" x2="{}" y2="{yy}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            margin + 20.0,
            PALETTE[i % PALETTE.len()],
            margin + 25.0,
            yy + 3.0,
            xml_escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
