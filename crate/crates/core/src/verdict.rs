//! Evidence selection, vote counting and per-sample evidence reports.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{Query, StatementKind};
use crate::label::PairLabel;
use crate::oracle::{Answer, ImageRef, QueryAnswer};

/// Default evidence-set size.
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerdictError {
    #[error("length mismatch: {queries} queries, {answers} answers, {scores} scores")]
    LengthMismatch {
        queries: usize,
        answers: usize,
        scores: usize,
    },
    #[error("query index {0} appears more than once")]
    DuplicateQueryIndex(usize),
    #[error("supportiveness {0} is not a probability")]
    InvalidSupport(f64),
    #[error("selected query index {0} is not among the report's queries")]
    UnknownSelection(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuery {
    pub query: Query,
    pub answer: QueryAnswer,
    pub p_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub label: PairLabel,
    /// Fraction of Yes answers among the selected queries; 0 when none.
    pub score: f64,
    pub selected: Vec<ScoredQuery>,
    pub supporting: Vec<ScoredQuery>,
}

/// The `min(k, n)` queries with the highest `p_s`, ordered by descending
/// `p_s` and then ascending query index.
pub fn select_evidence(scored: &[ScoredQuery], k: usize) -> Vec<ScoredQuery> {
    let mut ranked: Vec<&ScoredQuery> = scored.iter().collect();
    ranked.sort_by(|a, b| {
        b.p_s
            .total_cmp(&a.p_s)
            .then(a.query.index.cmp(&b.query.index))
    });
    ranked.into_iter().take(k).cloned().collect()
}

/// Majority vote over the selected answers. Ties, including the empty
/// selection, are judged Fake.
pub fn predict(selected: &[ScoredQuery]) -> Verdict {
    let yes = selected.iter().filter(|s| s.answer.answer.is_yes()).count();
    let no = selected.len() - yes;
    let label = if yes > no {
        PairLabel::Real
    } else {
        PairLabel::Fake
    };
    let score = if selected.is_empty() {
        0.0
    } else {
        yes as f64 / selected.len() as f64
    };
    let agreeing = match label {
        PairLabel::Real => Answer::Yes,
        PairLabel::Fake => Answer::No,
    };
    let supporting = selected
        .iter()
        .filter(|s| s.answer.answer == agreeing)
        .cloned()
        .collect();
    Verdict {
        label,
        score,
        selected: selected.to_vec(),
        supporting,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub index: usize,
    pub kind: StatementKind,
    pub x: String,
    pub y: Option<String>,
    pub z: Option<String>,
    pub text: String,
    pub answer: Answer,
    pub raw_score: f64,
    pub p_s: f64,
    pub selected: bool,
    /// 0-based position in the evidence set, when selected.
    pub rank: Option<usize>,
    pub supporting: bool,
}

impl ReportRow {
    pub fn slots(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.x.as_str())
            .chain(self.y.as_deref())
            .chain(self.z.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictSummary {
    pub label: PairLabel,
    pub score: f64,
    /// Query indices of the evidence set, in rank order.
    pub selected: Vec<usize>,
    pub supporting: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceReport {
    pub id: String,
    pub caption: String,
    pub image: ImageRef,
    pub verdict: VerdictSummary,
    /// One row per extracted query, in query-index order.
    pub queries: Vec<ReportRow>,
}

impl EvidenceReport {
    /// Evidence rows in rank order.
    pub fn evidence(&self) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self.queries.iter().filter(|r| r.selected).collect();
        rows.sort_by_key(|r| r.rank);
        rows
    }

    /// Plain-text rendering: a header line, then one line per evidence item.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{} {} score={:.2} caption={:?}\n",
            self.id, self.verdict.label, self.verdict.score, self.caption
        );
        for row in self.evidence() {
            let _ = writeln!(out, "{}", evidence_line(row));
        }
        out
    }
}

pub fn evidence_line(row: &ReportRow) -> String {
    format!("[p_s={:.2}] ANSWER={} — {}", row.p_s, row.answer, row.text)
}

/// Assembles the per-query table. `queries`, `answers` and `p_s` are aligned.
pub fn build_report(
    id: &str,
    caption: &str,
    image: &ImageRef,
    queries: &[Query],
    answers: &[QueryAnswer],
    p_s: &[f64],
    verdict: &Verdict,
) -> Result<EvidenceReport, VerdictError> {
    if queries.len() != answers.len() || queries.len() != p_s.len() {
        return Err(VerdictError::LengthMismatch {
            queries: queries.len(),
            answers: answers.len(),
            scores: p_s.len(),
        });
    }
    let mut seen = HashSet::new();
    for q in queries {
        if !seen.insert(q.index) {
            return Err(VerdictError::DuplicateQueryIndex(q.index));
        }
    }
    if let Some(bad) = p_s.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(VerdictError::InvalidSupport(*bad));
    }

    let selected: Vec<usize> = verdict.selected.iter().map(|s| s.query.index).collect();
    let supporting: Vec<usize> = verdict.supporting.iter().map(|s| s.query.index).collect();
    if let Some(missing) = selected.iter().find(|i| !seen.contains(*i)) {
        return Err(VerdictError::UnknownSelection(*missing));
    }

    let mut rows: Vec<ReportRow> = queries
        .iter()
        .zip(answers)
        .zip(p_s)
        .map(|((q, a), &p)| ReportRow {
            index: q.index,
            kind: q.statement.kind,
            x: q.statement.x.clone(),
            y: q.statement.y.clone(),
            z: q.statement.z.clone(),
            text: q.text.clone(),
            answer: a.answer,
            raw_score: a.raw_score,
            p_s: p,
            selected: selected.contains(&q.index),
            rank: selected.iter().position(|&i| i == q.index),
            supporting: supporting.contains(&q.index),
        })
        .collect();
    rows.sort_by_key(|r| r.index);

    Ok(EvidenceReport {
        id: id.to_owned(),
        caption: caption.to_owned(),
        image: image.clone(),
        verdict: VerdictSummary {
            label: verdict.label,
            score: verdict.score,
            selected,
            supporting,
        },
        queries: rows,
    })
}
