//! Annotated clinical documents.
//!
//! Offsets are counted in Unicode scalar values. Reserved grammar characters
//! (`{`, `}`, `|`) found in source text are replaced at load time by their
//! fullwidth look-alikes; each replacement is recorded on the document.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{IcdSystem, RESERVED_CHARS};

pub const DEFAULT_TRUNCATION: usize = 5000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate doc_id `{0}`")]
    DuplicateDocument(String),
    #[error("document `{doc_id}` mention {ordinal}: span [{start},{end}) is out of bounds")]
    OutOfBounds {
        doc_id: String,
        ordinal: usize,
        start: usize,
        end: usize,
    },
    #[error("document `{doc_id}` mention {ordinal}: surface {surface:?} does not match text {found:?}")]
    OffsetMismatch {
        doc_id: String,
        ordinal: usize,
        surface: String,
        found: String,
    },
    #[error("document `{doc_id}` mention {ordinal} overlaps the previous mention")]
    Overlap { doc_id: String, ordinal: usize },
    #[error("document `{doc_id}` contains reserved character `{ch}` at offset {offset}; substitute it at ingestion")]
    ReservedCharacter {
        doc_id: String,
        offset: usize,
        ch: char,
    },
    #[error("document `{doc_id}` mention {ordinal} has no gold code")]
    MissingGold { doc_id: String, ordinal: usize },
    #[error("k must be positive")]
    InvalidShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(rename = "code")]
    pub gold_code: Option<String>,
    pub system: IcdSystem,
}

/// A reserved character that was replaced at ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub offset: usize,
    pub original: char,
    pub replacement: char,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub language: String,
    pub text: String,
    pub mentions: Vec<Mention>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub substitutions: Vec<Substitution>,
}

impl Document {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks span bounds, surface agreement and ordering.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let chars: Vec<char> = self.text.chars().collect();
        let mut prev_end = 0;
        for (ordinal, m) in self.mentions.iter().enumerate() {
            if m.start >= m.end || m.end > chars.len() {
                return Err(CorpusError::OutOfBounds {
                    doc_id: self.doc_id.clone(),
                    ordinal,
                    start: m.start,
                    end: m.end,
                });
            }
            if ordinal > 0 && m.start < prev_end {
                return Err(CorpusError::Overlap {
                    doc_id: self.doc_id.clone(),
                    ordinal,
                });
            }
            let found: String = chars[m.start..m.end].iter().collect();
            if found != m.surface {
                return Err(CorpusError::OffsetMismatch {
                    doc_id: self.doc_id.clone(),
                    ordinal,
                    surface: m.surface.clone(),
                    found,
                });
            }
            prev_end = m.end;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

fn placeholder(ch: char) -> Option<char> {
    match ch {
        '{' => Some('\u{FF5B}'),
        '}' => Some('\u{FF5D}'),
        '|' => Some('\u{FF5C}'),
        _ => None,
    }
}

fn substitute_reserved(doc: &mut Document) {
    if !doc.text.contains(RESERVED_CHARS) {
        return;
    }
    let mut text = String::with_capacity(doc.text.len());
    for (offset, ch) in doc.text.chars().enumerate() {
        match placeholder(ch) {
            Some(replacement) => {
                doc.substitutions.push(Substitution {
                    offset,
                    original: ch,
                    replacement,
                });
                text.push(replacement);
            }
            None => text.push(ch),
        }
    }
    log::debug!(
        "document `{}`: substituted {} reserved characters",
        doc.doc_id,
        doc.substitutions.len()
    );
    doc.text = text;
    for m in &mut doc.mentions {
        m.surface = m.surface.chars().map(|c| placeholder(c).unwrap_or(c)).collect();
    }
}

impl Corpus {
    /// Reads the JSONL corpus format, one document per non-blank line.
    pub fn load<R: BufRead>(source: R) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut doc: Document = serde_json::from_str(&line).map_err(|source| {
                CorpusError::Json {
                    line: idx + 1,
                    source,
                }
            })?;
            doc.substitutions.clear();
            doc.mentions.sort_by_key(|m| m.start);
            doc.validate()?;
            substitute_reserved(&mut doc);
            if !seen.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocument(doc.doc_id));
            }
            documents.push(doc);
        }
        Ok(Corpus { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.documents.iter().map(|d| d.mentions.len()).sum()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn truncated(&self, limit: NonZeroUsize) -> Corpus {
        Corpus {
            documents: self
                .documents
                .iter()
                .map(|d| truncate_document(d, limit))
                .collect(),
        }
    }
}

/// Cuts the text to `limit` characters and drops every mention that ends past
/// the cut. Surviving offsets are unchanged.
pub fn truncate_document(doc: &Document, limit: NonZeroUsize) -> Document {
    let limit = limit.get();
    let mut out = doc.clone();
    if let Some((byte_cut, _)) = doc.text.char_indices().nth(limit) {
        out.text.truncate(byte_cut);
        out.mentions.retain(|m| m.end <= limit);
        out.substitutions.retain(|s| s.offset < limit);
    }
    out
}

/// Document text with each gold mention wrapped in braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedDocument {
    pub doc_id: String,
    pub marked_text: String,
    /// Brace-pair ordinal to mention.
    pub mention_index: Vec<Mention>,
}

impl MarkedDocument {
    /// Removes every brace, recovering the source text.
    pub fn unmarked(&self) -> String {
        self.marked_text
            .chars()
            .filter(|c| *c != '{' && *c != '}')
            .collect()
    }
}

pub fn mark_mentions(doc: &Document) -> Result<MarkedDocument, CorpusError> {
    if let Some((offset, ch)) = doc
        .text
        .chars()
        .enumerate()
        .find(|(_, c)| RESERVED_CHARS.contains(c))
    {
        return Err(CorpusError::ReservedCharacter {
            doc_id: doc.doc_id.clone(),
            offset,
            ch,
        });
    }
    doc.validate()?;

    let mut marked = String::with_capacity(doc.text.len() + 2 * doc.mentions.len());
    let mut mentions = doc.mentions.iter().peekable();
    let mut open: Option<usize> = None;
    let char_len = doc.char_len();
    for (i, ch) in doc.text.chars().chain(std::iter::once('\0')).enumerate() {
        if let Some(end) = open {
            if end == i {
                marked.push('}');
                open = None;
            }
        }
        if let Some(m) = mentions.next_if(|m| m.start == i) {
            marked.push('{');
            open = Some(m.end);
        }
        if i < char_len {
            marked.push(ch);
        }
    }
    Ok(MarkedDocument {
        doc_id: doc.doc_id.clone(),
        marked_text: marked,
        mention_index: doc.mentions.clone(),
    })
}

/// Number of training mentions per gold code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFrequency {
    pub counts: BTreeMap<String, usize>,
}

impl CodeFrequency {
    pub fn get(&self, code: &str) -> usize {
        self.counts.get(code).copied().unwrap_or(0)
    }

    /// True when the code was seen between 1 and `k` times.
    pub fn is_k_shot(&self, code: &str, k: usize) -> bool {
        (1..=k).contains(&self.get(code))
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

fn gold_of<'a>(doc: &'a Document, ordinal: usize, m: &'a Mention) -> Result<&'a str, CorpusError> {
    m.gold_code.as_deref().ok_or_else(|| CorpusError::MissingGold {
        doc_id: doc.doc_id.clone(),
        ordinal,
    })
}

pub fn code_frequencies(training: &Corpus) -> Result<CodeFrequency, CorpusError> {
    let mut counts = BTreeMap::new();
    for doc in &training.documents {
        for (ordinal, m) in doc.mentions.iter().enumerate() {
            *counts.entry(gold_of(doc, ordinal, m)?.to_string()).or_insert(0) += 1;
        }
    }
    Ok(CodeFrequency { counts })
}

/// `(doc_id, mention ordinal)` of every test mention whose gold code is k-shot.
/// Codes never seen in training are excluded.
pub fn few_shot_slice(
    test: &Corpus,
    freq: &CodeFrequency,
    k: usize,
) -> Result<Vec<(String, usize)>, CorpusError> {
    if k == 0 {
        return Err(CorpusError::InvalidShot);
    }
    let mut out = Vec::new();
    for doc in &test.documents {
        for (ordinal, m) in doc.mentions.iter().enumerate() {
            if freq.is_k_shot(gold_of(doc, ordinal, m)?, k) {
                out.push((doc.doc_id.clone(), ordinal));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SystemStats {
    pub samples: usize,
    pub codes: usize,
    pub one_shot_codes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub reports: usize,
    pub diagnoses: SystemStats,
    pub procedures: SystemStats,
    pub distinct_codes: usize,
    pub one_shot_codes: usize,
    /// Distinct codes of this corpus that are k-shot in the training
    /// frequencies, for k in {1, 5}. Only present when frequencies are given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub few_shot_codes: Option<BTreeMap<usize, usize>>,
}

pub const SHOT_LEVELS: [usize; 2] = [1, 5];

pub fn corpus_stats(c: &Corpus, freq: Option<&CodeFrequency>) -> StatsReport {
    let mut per_system: BTreeMap<IcdSystem, BTreeMap<&str, usize>> = BTreeMap::new();
    let mut all: BTreeMap<&str, usize> = BTreeMap::new();
    let mut report = StatsReport {
        reports: c.len(),
        ..Default::default()
    };
    for m in c.documents.iter().flat_map(|d| &d.mentions) {
        match m.system {
            IcdSystem::Diagnosis => report.diagnoses.samples += 1,
            IcdSystem::Procedure => report.procedures.samples += 1,
        }
        if let Some(code) = m.gold_code.as_deref() {
            *per_system.entry(m.system).or_default().entry(code).or_insert(0) += 1;
            *all.entry(code).or_insert(0) += 1;
        }
    }
    for (system, counts) in &per_system {
        let stats = match system {
            IcdSystem::Diagnosis => &mut report.diagnoses,
            IcdSystem::Procedure => &mut report.procedures,
        };
        stats.codes = counts.len();
        stats.one_shot_codes = counts.values().filter(|&&n| n == 1).count();
    }
    report.distinct_codes = all.len();
    report.one_shot_codes = all.values().filter(|&&n| n == 1).count();
    report.few_shot_codes = freq.map(|freq| {
        SHOT_LEVELS
            .iter()
            .map(|&k| {
                let n = all.keys().filter(|code| freq.is_k_shot(code, k)).count();
                (k, n)
            })
            .collect()
    });
    report
}

/// Distinct gold codes per document, used for set-level checks.
pub fn gold_code_sets(c: &Corpus) -> BTreeMap<&str, BTreeSet<&str>> {
    c.documents
        .iter()
        .map(|d| {
            let codes = d.mentions.iter().filter_map(|m| m.gold_code.as_deref()).collect();
            (d.doc_id.as_str(), codes)
        })
        .collect()
}
