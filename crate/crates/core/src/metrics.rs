//! Accuracy and fairness metrics.
//!
//! Counterfactual metrics take precomputed scores: `worlds[g]` holds the
//! scores of every row after its sensitive value was set to group `g`, so
//! the same functions serve exact SCM counterfactuals and approximations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sample_stdev, DataMatrix, VARIANCE_EPS};

pub const ACC_THRESHOLD: f64 = 0.5;
pub const KL_BINS: usize = 50;
pub const KL_SMOOTHING: f64 = 1e-9;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Fraction of rows where `score > 0.5` matches the binary label.
pub fn accuracy(scores: &[f64], y: &[f64]) -> Result<f64> {
    check_len(scores.len(), y.len(), "scores vs labels")?;
    let hits = scores
        .iter()
        .zip(y)
        .filter(|(s, yi)| (**s > ACC_THRESHOLD) == (**yi == 1.0))
        .count();
    Ok(hits as f64 / y.len() as f64)
}

/// Mann-Whitney AUC; tied scores count one half.
pub fn auc(scores: &[f64], y: &[f64]) -> Result<f64> {
    check_len(scores.len(), y.len(), "scores vs labels")?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Average ranks over tie blocks.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let avg_rank = (start + end + 1) as f64 / 2.0;
        rank_sum_pos += idx[start..end].iter().filter(|&&i| y[i] == 1.0).count() as f64 * avg_rank;
        start = end;
    }
    let n_pos = y.iter().filter(|v| **v == 1.0).count() as f64;
    let n_neg = y.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::SingleClass);
    }
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Accuracy and, when both classes are present, AUC.
pub fn acc_auc(scores: &[f64], y: &[f64]) -> Result<(f64, Option<f64>)> {
    let acc = accuracy(scores, y)?;
    match auc(scores, y) {
        Ok(v) => Ok((acc, Some(v))),
        Err(Error::SingleClass) => Ok((acc, None)),
        Err(e) => Err(e),
    }
}

pub fn rmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_len(pred.len(), y.len(), "predictions vs targets")?;
    let sse: f64 = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

fn group_count(groups: &[usize], worlds: usize) -> Result<usize> {
    let g = groups.iter().max().map_or(0, |m| m + 1).max(worlds);
    if g < 2 {
        return Err(Error::RequiresGroups);
    }
    Ok(g)
}

fn check_worlds(observed: &[f64], worlds: &[Vec<f64>]) -> Result<()> {
    for w in worlds {
        check_len(w.len(), observed.len(), "world scores vs observed")?;
    }
    Ok(())
}

/// Largest mean `|score in world g' - observed score|` over rows observed
/// in group `g`, across ordered pairs `g != g'`.
pub fn cf_metric(observed: &[f64], worlds: &[Vec<f64>], groups: &[usize]) -> Result<f64> {
    check_len(groups.len(), observed.len(), "groups vs scores")?;
    check_worlds(observed, worlds)?;
    if group_count(groups, worlds.len())? > worlds.len() {
        return Err(Error::InvalidParams(format!(
            "a group label exceeds the {} counterfactual worlds",
            worlds.len()
        )));
    }
    let mut best: f64 = 0.0;
    for g in 0..worlds.len() {
        let rows: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        if rows.is_empty() {
            continue;
        }
        for (h, world) in worlds.iter().enumerate() {
            if h == g {
                continue;
            }
            let mean = rows.iter().map(|&i| (world[i] - observed[i]).abs()).sum::<f64>() / rows.len() as f64;
            best = best.max(mean);
        }
    }
    Ok(best)
}

/// Largest difference between mean scores of two all-rows-set-to-`g` worlds.
pub fn aa_gap(worlds: &[Vec<f64>]) -> Result<f64> {
    if worlds.len() < 2 {
        return Err(Error::RequiresGroups);
    }
    let means: Vec<f64> = worlds.iter().map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Equalized-odds gap and the `(group, label)` strata it had to skip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EoGap {
    pub value: f64,
    pub skipped: Vec<(usize, u8)>,
}

/// `max_{y, g, g'} |P(score > 0.5 | g, y) - P(score > 0.5 | g', y)|`.
pub fn eo_gap(scores: &[f64], y: &[f64], groups: &[usize]) -> Result<EoGap> {
    check_len(scores.len(), y.len(), "scores vs labels")?;
    check_len(groups.len(), y.len(), "groups vs labels")?;
    let g = group_count(groups, 0)?;
    let mut value: f64 = 0.0;
    let mut skipped = Vec::new();
    for label in [0u8, 1u8] {
        let mut rates = Vec::new();
        for grp in 0..g {
            let rows: Vec<usize> = (0..y.len())
                .filter(|&i| groups[i] == grp && y[i] == f64::from(label))
                .collect();
            if rows.is_empty() {
                skipped.push((grp, label));
                continue;
            }
            let pos = rows.iter().filter(|&&i| scores[i] > ACC_THRESHOLD).count();
            rates.push(pos as f64 / rows.len() as f64);
        }
        if rates.len() >= 2 {
            let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
            value = value.max(max - min);
        }
    }
    Ok(EoGap { value, skipped })
}

/// `KL(P || Q)` between histograms of the two score vectors over `bins`
/// equal-width bins spanning their pooled range, each bin smoothed by
/// [`KL_SMOOTHING`].
pub fn kl_observed_vs_counterfactual(observed: &[f64], counterfactual: &[f64], bins: usize) -> Result<f64> {
    if observed.is_empty() || counterfactual.is_empty() || bins == 0 {
        return Err(Error::InvalidParams("KL needs nonempty scores and bins".into()));
    }
    let pooled = observed.iter().chain(counterfactual);
    let lo = pooled.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = pooled.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let histogram = |xs: &[f64]| {
        let mut counts = vec![0.0; bins];
        for &x in xs {
            let b = if width > 0.0 {
                (((x - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1.0;
        }
        let total = xs.len() as f64 + KL_SMOOTHING * bins as f64;
        counts.iter().map(|c| (c + KL_SMOOTHING) / total).collect::<Vec<_>>()
    };
    let p = histogram(observed);
    let q = histogram(counterfactual);
    Ok(p.iter()
        .zip(&q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Mean `|corr|` over all (column of `x`, column of `b`) pairs.
pub fn avg_pairwise_corr(x: &DataMatrix, b: &DataMatrix) -> Result<f64> {
    check_len(x.nrows(), b.nrows(), "row counts")?;
    let xs: Vec<Vec<f64>> = (0..x.ncols()).map(|j| x.column(j)).collect();
    let bs: Vec<Vec<f64>> = (0..b.ncols()).map(|j| b.column(j)).collect();
    for (cols, m) in [(&xs, x), (&bs, b)] {
        for (j, c) in cols.iter().enumerate() {
            if sample_stdev(c) <= VARIANCE_EPS {
                return Err(Error::ZeroVarianceColumn(m.col_names()[j].clone()));
            }
        }
    }
    let mut total = 0.0;
    for xc in &xs {
        for bc in &bs {
            total += pearson(xc, bc).abs();
        }
    }
    Ok(total / (xs.len() * bs.len()) as f64)
}

/// `||A~ - A||_F`.
pub fn modification_norm(a: &DataMatrix, a_tilde: &DataMatrix) -> Result<f64> {
    if a.nrows() != a_tilde.nrows() || a.ncols() != a_tilde.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            a_tilde.nrows(),
            a_tilde.ncols()
        )));
    }
    Ok((a_tilde.values() - a.values()).norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
    /// Which definition or counterfactual mode produced the value.
    pub provenance: String,
}

/// Ordered metric values for one method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entries: Vec<MetricEntry>,
}

impl MetricsReport {
    /// Adds or replaces `name`. Non-finite values are rejected.
    pub fn insert(&mut self, name: &str, value: f64, provenance: &str) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidParams(format!("metric `{name}` is not finite: {value}")));
        }
        let entry = MetricEntry {
            name: name.to_string(),
            value,
            provenance: provenance.to_string(),
        };
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    /// `label<TAB>metric<TAB>value<TAB>provenance` lines, no header.
    pub fn tsv_rows(&self, label: &str) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{label}\t{}\t{}\t{}", e.name, e.value, e.provenance);
        }
        out
    }
}
