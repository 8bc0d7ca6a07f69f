//! Predictions JSONL and the join against a gold corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::decoder::AnnotationResult;
use crate::metrics::Assignment;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("cannot read predictions: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid prediction record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate prediction record for `{0}`")]
    DuplicateDocument(String),
    #[error("doc_id mismatch: missing predictions for {missing:?}; predictions for unknown documents {unexpected:?}")]
    DocumentMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("document `{doc_id}`: {detail}")]
    MentionMismatch { doc_id: String, detail: String },
    #[error("document `{doc_id}` mention {mention} has no gold code")]
    MissingGold { doc_id: String, mention: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCode {
    pub mention: usize,
    pub pred_code: String,
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub assignments: Vec<PredictedCode>,
    pub annotated_text: String,
}

impl PredictionRecord {
    pub fn from_result(doc_id: &str, result: &AnnotationResult) -> Self {
        PredictionRecord {
            doc_id: doc_id.to_string(),
            assignments: result
                .assignments
                .iter()
                .enumerate()
                .map(|(mention, code)| PredictedCode {
                    mention,
                    pred_code: code.clone(),
                })
                .collect(),
            annotated_text: result.annotated_text.clone(),
        }
    }
}

pub fn read_predictions<R: BufRead>(source: R) -> Result<Vec<PredictionRecord>, PredictionError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| PredictionError::Json {
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(
    mut sink: W,
    records: &[PredictionRecord],
) -> Result<(), PredictionError> {
    for r in records {
        serde_json::to_writer(&mut sink, r).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Pairs every gold mention with its prediction. The document sets must match
/// exactly and every gold mention must be predicted exactly once.
pub fn join_assignments(
    gold: &Corpus,
    predictions: &[PredictionRecord],
) -> Result<Vec<Assignment>, PredictionError> {
    let mut by_doc: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for p in predictions {
        if by_doc.insert(&p.doc_id, p).is_some() {
            return Err(PredictionError::DuplicateDocument(p.doc_id.clone()));
        }
    }
    let gold_ids: BTreeSet<&str> = gold.documents.iter().map(|d| d.doc_id.as_str()).collect();
    let missing: Vec<String> = gold_ids
        .iter()
        .filter(|id| !by_doc.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let unexpected: Vec<String> = by_doc
        .keys()
        .filter(|id| !gold_ids.contains(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(PredictionError::DocumentMismatch {
            missing,
            unexpected,
        });
    }

    let mut out = Vec::with_capacity(gold.mention_count());
    for doc in &gold.documents {
        let record = by_doc[doc.doc_id.as_str()];
        let mismatch = |detail: String| PredictionError::MentionMismatch {
            doc_id: doc.doc_id.clone(),
            detail,
        };
        if record.assignments.len() != doc.mentions.len() {
            return Err(mismatch(format!(
                "{} gold mentions but {} predictions",
                doc.mentions.len(),
                record.assignments.len()
            )));
        }
        let mut preds: Vec<&PredictedCode> = record.assignments.iter().collect();
        preds.sort_by_key(|p| p.mention);
        for (ordinal, (m, p)) in doc.mentions.iter().zip(preds).enumerate() {
            if p.mention != ordinal {
                return Err(mismatch(format!("expected mention {ordinal}, found {}", p.mention)));
            }
            let gold_code = m.gold_code.clone().ok_or_else(|| PredictionError::MissingGold {
                doc_id: doc.doc_id.clone(),
                mention: ordinal,
            })?;
            out.push(Assignment {
                doc_id: doc.doc_id.clone(),
                mention: ordinal,
                gold_code,
                pred_code: p.pred_code.clone(),
                system: m.system,
            });
        }
    }
    Ok(out)
}
