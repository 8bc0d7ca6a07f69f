//! Small synthetic knowledge base and corpus used by tests, examples and the
//! CLI smoke runs.

use crate::corpus::Corpus;
use crate::ontology::Ontology;

/// Three diagnosis codes in one chapter, split over two subchapters.
pub const KB_TSV: &str = include_str!("../data/fixture_kb.tsv");

/// Two documents, four mentions; `A01.1` occurs three times, `A01.2` once.
pub const CORPUS_JSONL: &str = include_str!("../data/fixture_corpus.jsonl");

pub fn ontology() -> Ontology {
    Ontology::load(KB_TSV.as_bytes()).expect("fixture KB is valid")
}

pub fn corpus() -> Corpus {
    Corpus::load(CORPUS_JSONL.as_bytes()).expect("fixture corpus is valid")
}
