//! Ranking metrics for multi-label predictions.
//!
//! Every metric is a step sum `Σ p(i)·Δr(i)` over a ranked list, where
//! `p(i)` is the precision of the top `i` items and `Δr(i)` is `1/NP` when
//! item `i` is a positive and 0 otherwise. No interpolation is applied.
//!
//! Ranking is by descending score. Ties keep the original order: sample
//! index first, then class index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::Matrix;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPredictions {
    scores: Matrix,
    truth: Matrix,
}

impl ScoredPredictions {
    pub fn new(scores: Matrix, truth: Matrix) -> Result<Self> {
        if scores.shape() != truth.shape() {
            return Err(Error::Dimension(format!(
                "scores {:?} vs truth {:?}",
                scores.shape(),
                truth.shape()
            )));
        }
        if !scores.is_finite() {
            return Err(Error::Numeric("non-finite score".into()));
        }
        if truth.as_slice().iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::Input("truth must be binary".into()));
        }
        Ok(Self { scores, truth })
    }

    pub fn scores(&self) -> &Matrix {
        &self.scores
    }

    pub fn truth(&self) -> &Matrix {
        &self.truth
    }

    pub fn n_samples(&self) -> usize {
        self.scores.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.scores.cols()
    }

    pub fn positives_per_class(&self) -> Vec<usize> {
        (0..self.n_classes())
            .map(|j| {
                (0..self.n_samples())
                    .filter(|&i| self.truth[(i, j)] == 1.0)
                    .count()
            })
            .collect()
    }

    fn total_positives(&self) -> usize {
        self.truth.as_slice().iter().filter(|&&t| t == 1.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall after each item of a ranked list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives_total: usize,
}

/// Stable descending order of `scores`.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Step-sum AP over items already in rank order. `positives_total` may
/// exceed the positives present in `hits` (truncated lists).
fn ranked_ap(hits: impl Iterator<Item = bool>, positives_total: usize) -> Option<f64> {
    if positives_total == 0 {
        return None;
    }
    let delta_r = 1.0 / positives_total as f64;
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (rank0, hit) in hits.enumerate() {
        if hit {
            tp += 1;
            ap += (tp as f64 / (rank0 + 1) as f64) * delta_r;
        }
    }
    Some(ap)
}

pub fn pr_curve(scores: &[f64], truth: &[bool]) -> PrCurve {
    let positives_total = truth.iter().filter(|&&t| t).count();
    let mut tp = 0usize;
    let points = ranking(scores)
        .into_iter()
        .enumerate()
        .map(|(rank0, i)| {
            tp += usize::from(truth[i]);
            PrPoint {
                precision: tp as f64 / (rank0 + 1) as f64,
                recall: if positives_total == 0 {
                    0.0
                } else {
                    tp as f64 / positives_total as f64
                },
            }
        })
        .collect();
    PrCurve {
        points,
        positives_total,
    }
}

/// AP of one class; `None` when the class has no positives.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let np = truth.iter().filter(|&&t| t).count();
    ranked_ap(ranking(scores).into_iter().map(|i| truth[i]), np)
}

fn class_ap(preds: &ScoredPredictions, j: usize) -> Option<f64> {
    let scores = preds.scores.column(j);
    let truth: Vec<bool> = preds.truth.column(j).iter().map(|&t| t == 1.0).collect();
    average_precision(&scores, &truth)
}

pub fn ap_per_class(preds: &ScoredPredictions, exec: Execution) -> Vec<Option<f64>> {
    par::map_range(exec, preds.n_classes(), |j| class_ap(preds, j))
}

/// Unweighted mean over classes with defined AP.
pub fn macro_map(ap: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = ap.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Undefined("no class has a positive sample".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Mean of AP weighted by each class's positive count.
pub fn weighted_map(ap: &[Option<f64>], positives: &[usize]) -> Result<f64> {
    if ap.len() != positives.len() {
        return Err(Error::Dimension(format!(
            "{} AP values, {} positive counts",
            ap.len(),
            positives.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0usize;
    for (a, &np) in ap.iter().zip(positives) {
        if let (Some(a), true) = (a, np > 0) {
            num += a * np as f64;
            den += np;
        }
    }
    if den == 0 {
        return Err(Error::Undefined("no positives in any class".into()));
    }
    Ok(num / den as f64)
}

/// AP over all `N·L` predictions pooled into one ranking.
pub fn gap(preds: &ScoredPredictions) -> Result<f64> {
    let scores = preds.scores.as_slice();
    let truth = preds.truth.as_slice();
    ranked_ap(
        ranking(scores).into_iter().map(|k| truth[k] == 1.0),
        preds.total_positives(),
    )
    .ok_or_else(|| Error::Undefined("GAP needs at least one positive".into()))
}

/// GAP over each sample's top-`k` predictions. Positives cut from the pool
/// still count in the recall denominator.
pub fn gap_at_k(preds: &ScoredPredictions, k: usize) -> Result<f64> {
    let l = preds.n_classes();
    if k == 0 || k > l {
        return Err(Error::Input(format!("k = {k} outside 1..={l}")));
    }
    let mut pool_scores = Vec::with_capacity(preds.n_samples() * k);
    let mut pool_hits = Vec::with_capacity(preds.n_samples() * k);
    for i in 0..preds.n_samples() {
        let row = preds.scores.row(i);
        let mut kept = ranking(row);
        kept.truncate(k);
        kept.sort_unstable();
        for j in kept {
            pool_scores.push(row[j]);
            pool_hits.push(preds.truth[(i, j)] == 1.0);
        }
    }
    ranked_ap(
        ranking(&pool_scores).into_iter().map(|p| pool_hits[p]),
        preds.total_positives(),
    )
    .ok_or_else(|| Error::Undefined("GAP@K needs at least one positive".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ap_per_class: Vec<Option<f64>>,
    pub positives_per_class: Vec<usize>,
    pub macro_map: f64,
    pub weighted_map: f64,
    pub gap: f64,
    pub gap_at_k: Vec<(usize, f64)>,
}

pub fn evaluate(preds: &ScoredPredictions, ks: &[usize]) -> Result<MetricReport> {
    evaluate_with(preds, ks, Execution::default())
}

pub fn evaluate_with(
    preds: &ScoredPredictions,
    ks: &[usize],
    exec: Execution,
) -> Result<MetricReport> {
    let ap = ap_per_class(preds, exec);
    let positives = preds.positives_per_class();
    let gap_at_k = ks
        .iter()
        .map(|&k| Ok((k, gap_at_k(preds, k)?)))
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        macro_map: macro_map(&ap)?,
        weighted_map: weighted_map(&ap, &positives)?,
        gap: gap(preds)?,
        ap_per_class: ap,
        positives_per_class: positives,
        gap_at_k,
    })
}

/// JSON form of a [`MetricReport`], per-class values keyed by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReportDoc {
    pub gap: f64,
    pub gap_at_k: BTreeMap<usize, f64>,
    pub macro_map: f64,
    pub weighted_map: f64,
    pub ap_per_class: BTreeMap<u32, Option<f64>>,
    pub positives_per_class: BTreeMap<u32, usize>,
    /// Classes without positives; excluded from both mAP averages.
    pub undefined_classes: Vec<u32>,
    pub note: String,
}

impl MetricReport {
    pub fn to_doc(&self, class_ids: &[u32]) -> MetricReportDoc {
        MetricReportDoc {
            gap: self.gap,
            gap_at_k: self.gap_at_k.iter().copied().collect(),
            macro_map: self.macro_map,
            weighted_map: self.weighted_map,
            ap_per_class: class_ids.iter().copied().zip(self.ap_per_class.iter().copied()).collect(),
            positives_per_class: class_ids
                .iter()
                .copied()
                .zip(self.positives_per_class.iter().copied())
                .collect(),
            undefined_classes: class_ids
                .iter()
                .zip(&self.ap_per_class)
                .filter(|(_, a)| a.is_none())
                .map(|(c, _)| *c)
                .collect(),
            note: "GAP@K keeps every positive in the recall denominator; it can reach 1 only when K covers all positives of each sample".into(),
        }
    }
}
