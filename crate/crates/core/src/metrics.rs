//! Entity-linking evaluation.
//!
//! With gold mentions, linking precision and recall collapse to accuracy, so
//! the headline numbers are micro accuracy (over mentions) and macro accuracy
//! (mean of per-document accuracies). Partial accuracy relaxes correctness to
//! a hierarchy level. The multi-label view collapses each document's mentions
//! into code sets, so a code only has to be predicted once per document.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CodeFrequency, SHOT_LEVELS};
use crate::ontology::{HierarchyLevel, IcdSystem, Ontology, OntologyError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no assignments")]
    Empty,
    #[error("duplicate assignment for document `{doc_id}` mention {mention}")]
    Duplicate { doc_id: String, mention: usize },
    #[error("k must be positive")]
    InvalidShot,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Gold and predicted code for one mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub doc_id: String,
    pub mention: usize,
    pub gold_code: String,
    pub pred_code: String,
    pub system: IcdSystem,
}

impl Assignment {
    pub fn is_correct(&self) -> bool {
        self.gold_code == self.pred_code
    }
}

fn non_empty(assignments: &[Assignment]) -> Result<(), MetricsError> {
    if assignments.is_empty() {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

/// Rejects repeated `(doc_id, mention)` keys.
pub fn check_unique(assignments: &[Assignment]) -> Result<(), MetricsError> {
    let mut seen = HashSet::with_capacity(assignments.len());
    for a in assignments {
        if !seen.insert((a.doc_id.as_str(), a.mention)) {
            return Err(MetricsError::Duplicate {
                doc_id: a.doc_id.clone(),
                mention: a.mention,
            });
        }
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

pub fn micro_accuracy(assignments: &[Assignment]) -> Result<f64, MetricsError> {
    non_empty(assignments)?;
    let correct = assignments.iter().filter(|a| a.is_correct()).count();
    Ok(ratio(correct, assignments.len()))
}

/// Mean over documents of per-document accuracy. Documents only appear here
/// through their assignments, so mentionless documents never enter the mean.
pub fn macro_accuracy(assignments: &[Assignment]) -> Result<f64, MetricsError> {
    non_empty(assignments)?;
    let mut per_doc: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for a in assignments {
        let entry = per_doc.entry(&a.doc_id).or_default();
        entry.0 += a.is_correct() as usize;
        entry.1 += 1;
    }
    let sum: f64 = per_doc.values().map(|&(c, n)| ratio(c, n)).sum();
    Ok(sum / per_doc.len() as f64)
}

/// Micro accuracy where a prediction is correct if it shares the gold code's
/// ancestor at `level`.
pub fn partial_accuracy(
    assignments: &[Assignment],
    ont: &Ontology,
    level: HierarchyLevel,
) -> Result<f64, MetricsError> {
    non_empty(assignments)?;
    let mut correct = 0;
    for a in assignments {
        let gold = ont.ancestors(&a.gold_code)?;
        let pred = ont.ancestors(&a.pred_code)?;
        correct += (gold.at(level) == pred.at(level)) as usize;
    }
    Ok(ratio(correct, assignments.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(true_pos: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { ratio(true_pos, predicted) };
        let recall = if gold == 0 { 0.0 } else { ratio(true_pos, gold) };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Multi-label scores per system and combined. A system entry is `None` when
/// no assignment belongs to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlcReport {
    #[serde(rename = "CM")]
    pub diagnosis: Option<Prf>,
    #[serde(rename = "PCS")]
    pub procedure: Option<Prf>,
    pub combined: Prf,
}

fn set_counts<'a, I>(assignments: I) -> Option<(usize, usize, usize)>
where
    I: IntoIterator<Item = &'a Assignment>,
{
    let mut docs: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for a in assignments {
        let (pred, gold) = docs.entry(&a.doc_id).or_default();
        pred.insert(&a.pred_code);
        gold.insert(&a.gold_code);
    }
    if docs.is_empty() {
        return None;
    }
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (pred, gold) in docs.values() {
        tp += pred.intersection(gold).count();
        np += pred.len();
        ng += gold.len();
    }
    Some((tp, np, ng))
}

/// Per-document code-set precision/recall/F1, micro-aggregated over
/// `(document, code)` pairs. Assignments are split by the mention's system.
pub fn mlc_report(assignments: &[Assignment]) -> Result<MlcReport, MetricsError> {
    non_empty(assignments)?;
    let prf = |c: (usize, usize, usize)| Prf::from_counts(c.0, c.1, c.2);
    let by_system = |s: IcdSystem| set_counts(assignments.iter().filter(|a| a.system == s)).map(prf);
    Ok(MlcReport {
        diagnosis: by_system(IcdSystem::Diagnosis),
        procedure: by_system(IcdSystem::Procedure),
        combined: prf(set_counts(assignments).ok_or(MetricsError::Empty)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    /// `None` when the slice is empty.
    pub accuracy: Option<f64>,
    pub support: usize,
}

/// Micro accuracy over mentions whose gold code was seen 1..=k times in
/// training.
pub fn few_shot_accuracy(
    assignments: &[Assignment],
    freq: &CodeFrequency,
    k: usize,
) -> Result<FewShotResult, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidShot);
    }
    let (correct, support) = assignments
        .iter()
        .filter(|a| freq.is_k_shot(&a.gold_code, k))
        .fold((0, 0), |(c, n), a| (c + a.is_correct() as usize, n + 1));
    Ok(FewShotResult {
        accuracy: (support > 0).then(|| ratio(correct, support)),
        support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialAccuracy {
    pub chapter: f64,
    pub subchapter: f64,
    pub partial: f64,
}

impl PartialAccuracy {
    pub fn at(&self, level: HierarchyLevel) -> f64 {
        match level {
            HierarchyLevel::Chapter => self.chapter,
            HierarchyLevel::Subchapter => self.subchapter,
            HierarchyLevel::Partial => self.partial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub partial: PartialAccuracy,
    pub mlc: MlcReport,
    /// Keyed by k as a string ("1", "5"); empty without training frequencies.
    pub few_shot: BTreeMap<String, FewShotResult>,
}

pub fn build_report(
    assignments: &[Assignment],
    ont: &Ontology,
    freq: Option<&CodeFrequency>,
) -> Result<EvalReport, MetricsError> {
    non_empty(assignments)?;
    check_unique(assignments)?;
    let partial = PartialAccuracy {
        chapter: partial_accuracy(assignments, ont, HierarchyLevel::Chapter)?,
        subchapter: partial_accuracy(assignments, ont, HierarchyLevel::Subchapter)?,
        partial: partial_accuracy(assignments, ont, HierarchyLevel::Partial)?,
    };
    let mut few_shot = BTreeMap::new();
    if let Some(freq) = freq {
        for k in SHOT_LEVELS {
            few_shot.insert(k.to_string(), few_shot_accuracy(assignments, freq, k)?);
        }
    }
    Ok(EvalReport {
        micro: micro_accuracy(assignments)?,
        macro_: macro_accuracy(assignments)?,
        partial,
        mlc: mlc_report(assignments)?,
        few_shot,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Plain-text tables: accuracy, hierarchy levels, multi-label scores and
/// few-shot accuracy. Values are percentages with two decimals.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12}{:>8}{:>8}", "Accuracy", "Micro", "Macro");
    let _ = writeln!(out, "{:<12}{:>8}{:>8}", "", pct(report.micro), pct(report.macro_));
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}{:>8}{:>8}{:>8}", "Hierarchy", "Chap", "Sub", "Part");
    let p = &report.partial;
    let _ = writeln!(
        out,
        "{:<12}{:>8}{:>8}{:>8}",
        "",
        pct(p.chapter),
        pct(p.subchapter),
        pct(p.partial)
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}{:>8}{:>8}{:>8}", "Multi-label", "P", "R", "F1");
    let rows = [
        ("CM", report.mlc.diagnosis),
        ("PCS", report.mlc.procedure),
        ("Combined", Some(report.mlc.combined)),
    ];
    for (name, prf) in rows {
        match prf {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:<12}{:>8}{:>8}{:>8}",
                    name,
                    pct(s.precision),
                    pct(s.recall),
                    pct(s.f1)
                );
            }
            None => {
                let _ = writeln!(out, "{:<12}{:>8}{:>8}{:>8}", name, "-", "-", "-");
            }
        }
    }
    if !report.few_shot.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12}{:>10}{:>9}", "Few-shot", "Accuracy", "Support");
        for (k, r) in &report.few_shot {
            let acc = r.accuracy.map_or_else(|| "-".to_string(), pct);
            let _ = writeln!(out, "{:<12}{:>10}{:>9}", format!("{k}-shot"), acc, r.support);
        }
    }
    out
}
