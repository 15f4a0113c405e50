//! Mann-Whitney U test and unweighted means.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("group {0:?} is empty")]
    Empty(String),
    #[error("group {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("table rows have different lengths")]
    Ragged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        let label = label.into();
        if values.is_empty() {
            return Err(StatsError::Empty(label));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(label));
        }
        Ok(Self { label, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first group: pairs where it is larger, ties counting one half.
    #[serde(rename = "U")]
    pub u: f64,
    pub p: f64,
    pub method: Method,
}

/// Largest combined sample size tested by full enumeration.
pub const DEFAULT_EXACT_MAX: usize = 12;

pub fn mann_whitney_u(a: &SampleGroup, b: &SampleGroup) -> Result<MannWhitney, StatsError> {
    mann_whitney_u_with(a, b, DEFAULT_EXACT_MAX)
}

pub fn mann_whitney_u_with(a: &SampleGroup, b: &SampleGroup, exact_max: usize) -> Result<MannWhitney, StatsError> {
    for g in [a, b] {
        if g.values.is_empty() {
            return Err(StatsError::Empty(g.label.clone()));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(g.label.clone()));
        }
    }
    let (n, m) = (a.values.len(), b.values.len());
    let pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    let ranks = midranks(&pooled);
    let u_of = |first: &[usize]| first.iter().map(|&i| ranks[i]).sum::<f64>() - (n * (n + 1)) as f64 / 2.0;
    let u = u_of(&(0..n).collect::<Vec<_>>());
    if n + m <= exact_max {
        let mut total = 0usize;
        let mut le = 0usize;
        let mut ge = 0usize;
        let mut first = Vec::with_capacity(n);
        for mask in 0u64..(1u64 << (n + m)) {
            if mask.count_ones() as usize != n {
                continue;
            }
            first.clear();
            first.extend((0..n + m).filter(|i| mask >> i & 1 == 1));
            let v = u_of(&first);
            total += 1;
            le += usize::from(v <= u);
            ge += usize::from(v >= u);
        }
        let p = (2.0 * le.min(ge) as f64 / total as f64).min(1.0);
        return Ok(MannWhitney {
            u,
            p,
            method: Method::Exact,
        });
    }
    let big_n = (n + m) as f64;
    let (nf, mf) = (n as f64, m as f64);
    let mu = nf * mf / 2.0;
    let ties: f64 = tie_sizes(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * mf / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * std.sf(z)).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p,
        method: Method::Normal,
    })
}

/// 1-based ranks with tied values sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && values[idx[e]] == values[idx[s]] {
            e += 1;
        }
        let r = (s + 1 + e) as f64 / 2.0;
        for &i in &idx[s..e] {
            ranks[i] = r;
        }
        s = e;
    }
    ranks
}

fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.chunk_by(|x, y| x == y).map(<[f64]>::len).collect()
}

pub fn macro_mean(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty("values".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Row means and column means of a rectangular table.
pub fn group_means(table: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    let width = table.first().map(Vec::len).ok_or_else(|| StatsError::Empty("table".into()))?;
    if table.iter().any(|r| r.len() != width) {
        return Err(StatsError::Ragged);
    }
    let rows = table.iter().map(|r| macro_mean(r)).collect::<Result<_, _>>()?;
    let cols = (0..width)
        .map(|j| macro_mean(&table.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    Ok((rows, cols))
}
