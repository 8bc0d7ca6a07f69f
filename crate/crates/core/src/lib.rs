//! Constrained decoding and evaluation for ICD-10 entity linking.
//!
//! The crate is split along the pipeline:
//!
//! - [`ontology`]: the hierarchical knowledge base and canonical
//!   `chapter --> subchapter --> title` representations.
//! - [`corpus`]: annotated documents, brace marking, truncation and
//!   training-frequency slices.
//! - [`lexicon`]: vocabularies and the prefix trie of representations.
//! - [`decoder`]: greedy constrained decoding in title and annotation mode,
//!   plus stepping sessions for external inference loops.
//! - [`scorer`]: the scoring contract and reference scorers (oracle, seeded
//!   random, n-gram).
//! - [`metrics`]: micro/macro/partial accuracy, multi-label scores and
//!   few-shot slices.
//! - [`predictions`]: the predictions file and its join with gold data.
//!
//! ```
//! use icdlink::{fixtures, corpus, decoder::Decoder, lexicon::{PrefixTrie, Vocabulary}};
//! use icdlink::scorer::OracleScorer;
//!
//! let ont = fixtures::ontology();
//! let trie = PrefixTrie::build(&Vocabulary::characters(), &ont).unwrap();
//! let doc = corpus::mark_mentions(&fixtures::corpus().documents[0]).unwrap();
//! let mut oracle = OracleScorer::for_annotation(trie.vocabulary(), &ont, &doc).unwrap();
//! let result = Decoder::new(&ont, &trie).annotate_document(&mut oracle, &doc).unwrap();
//! assert_eq!(result.assignments, ["A01.1", "A01.2"]);
//! ```

pub mod corpus;
pub mod decoder;
pub mod fixtures;
pub mod lexicon;
pub mod metrics;
pub mod ontology;
pub mod predictions;
pub mod scorer;

pub use corpus::{CodeFrequency, Corpus, Document, MarkedDocument, Mention};
pub use decoder::{AnnotationResult, AnnotationSession, Decoder, TitleSession};
pub use lexicon::{PrefixTrie, TokenId, Vocabulary};
pub use metrics::{Assignment, EvalReport};
pub use ontology::{IcdEntity, IcdSystem, Ontology};
pub use scorer::{NgramModel, OracleScorer, SeededRandomScorer, TokenScorer};
