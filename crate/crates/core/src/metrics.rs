//! Detection metrics (accuracy, ROC AUC, FAR, FRR) and HIT@k for evidence.
//!
//! Fake is the threat class: FAR is the share of fake pairs accepted as
//! real, FRR the share of real pairs rejected as fake. The continuous score
//! is the confidence that a pair is Real.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::PairLabel;
use crate::verdict::EvidenceReport;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("both Real and Fake samples are required")]
    MissingClass,
    #[error("no annotation for sample {0:?}")]
    MissingAnnotation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub true_label: PairLabel,
    pub predicted_label: PairLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceAnnotation {
    pub id: String,
    pub slots: Vec<String>,
}

pub fn accuracy(preds: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let correct = preds
        .iter()
        .filter(|p| p.true_label == p.predicted_label)
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

fn class_counts(preds: &[LabeledPrediction]) -> Result<(usize, usize), MetricsError> {
    let real = preds
        .iter()
        .filter(|p| p.true_label == PairLabel::Real)
        .count();
    let fake = preds.len() - real;
    if real == 0 || fake == 0 {
        return Err(MetricsError::MissingClass);
    }
    Ok((real, fake))
}

/// `(FAR, FRR)`.
pub fn far_frr(preds: &[LabeledPrediction]) -> Result<(f64, f64), MetricsError> {
    let (real, fake) = class_counts(preds)?;
    let accepted_fake = preds
        .iter()
        .filter(|p| p.true_label == PairLabel::Fake && p.predicted_label == PairLabel::Real)
        .count();
    let rejected_real = preds
        .iter()
        .filter(|p| p.true_label == PairLabel::Real && p.predicted_label == PairLabel::Fake)
        .count();
    Ok((
        accepted_fake as f64 / fake as f64,
        rejected_real as f64 / real as f64,
    ))
}

/// Mann-Whitney AUC with Real as the positive class; ties count one half.
pub fn auc_roc(preds: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    let (real, fake) = class_counts(preds)?;
    let mut order: Vec<&LabeledPrediction> = preds.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Sum of 1-based mid-ranks of the Real samples.
    let mut real_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && order[end].score == order[start].score {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let reals = order[start..end]
            .iter()
            .filter(|p| p.true_label == PairLabel::Real)
            .count();
        real_rank_sum += mid_rank * reals as f64;
        start = end;
    }
    let u = real_rank_sum - (real * (real + 1)) as f64 / 2.0;
    Ok(u / (real * fake) as f64)
}

/// Lower-cased, punctuation-stripped whitespace tokens.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|w| {
        let t: String = w
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        (!t.is_empty()).then_some(t)
    })
}

/// Fraction of reports whose top-`k` evidence shares at least one token with
/// the sample's annotated slots.
pub fn hit_at_k(
    reports: &[EvidenceReport],
    annotations: &[EvidenceAnnotation],
    k: usize,
) -> Result<f64, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let vocab: HashMap<&str, HashSet<String>> = annotations
        .iter()
        .map(|a| (a.id.as_str(), a.slots.iter().flat_map(|s| tokens(s)).collect()))
        .collect();

    let mut hits = 0;
    for report in reports {
        let truth = vocab
            .get(report.id.as_str())
            .ok_or_else(|| MetricsError::MissingAnnotation(report.id.clone()))?;
        let hit = report
            .evidence()
            .into_iter()
            .take(k)
            .any(|row| row.slots().flat_map(tokens).any(|t| truth.contains(&t)));
        if hit {
            hits += 1;
        }
    }
    Ok(hits as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub auc_roc: f64,
    pub far: f64,
    pub frr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_at_10: Option<f64>,
    pub samples: usize,
    pub real: usize,
    pub fake: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotated: Option<usize>,
}

impl MetricsReport {
    pub fn compute(preds: &[LabeledPrediction]) -> Result<Self, MetricsError> {
        let (real, fake) = class_counts(preds)?;
        let (far, frr) = far_frr(preds)?;
        Ok(Self {
            accuracy: accuracy(preds)?,
            auc_roc: auc_roc(preds)?,
            far,
            frr,
            hit_at_10: None,
            samples: preds.len(),
            real,
            fake,
            annotated: None,
        })
    }
}
