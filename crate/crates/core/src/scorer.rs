//! Next-token scoring contract and deterministic stand-ins for a language
//! model.
//!
//! A scorer only scores; the decoder owns candidate selection. Every scorer
//! here is cheap enough to run thousands of decodes in a test.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{mark_mentions, Corpus, CorpusError, MarkedDocument};
use crate::decoder::render_annotation;
use crate::lexicon::{LexiconError, TokenId, Vocabulary};
use crate::ontology::{Ontology, OntologyError};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer returned {got} scores for {expected} candidates")]
    WrongLength { expected: usize, got: usize },
    #[error("scorer returned a non-finite score for candidate {0}")]
    NonFinite(TokenId),
    #[error("oracle needs a gold code for mention {0}")]
    MissingGold(usize),
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// What the scorer sees: the prompt (caller context, or the marked document
/// in annotation mode) followed by the tokens generated so far.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub prompt: &'a [TokenId],
    pub generated: &'a [TokenId],
}

impl Context<'_> {
    pub fn len(&self) -> usize {
        self.prompt.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = TokenId> + '_ {
        self.prompt.iter().chain(self.generated).copied()
    }

    /// The last `n` tokens (fewer if the context is shorter).
    pub fn tail(&self, n: usize) -> Vec<TokenId> {
        let mut out: Vec<TokenId> = self.iter().rev().take(n).collect();
        out.reverse();
        out
    }
}

pub trait TokenScorer {
    /// One finite score per candidate, aligned with `candidates`.
    /// `candidates` is nonempty and ascending.
    fn score(&mut self, context: &Context<'_>, candidates: &[TokenId])
        -> Result<Vec<f64>, ScorerError>;
}

impl<S: TokenScorer + ?Sized> TokenScorer for &mut S {
    fn score(
        &mut self,
        context: &Context<'_>,
        candidates: &[TokenId],
    ) -> Result<Vec<f64>, ScorerError> {
        (**self).score(context, candidates)
    }
}

impl<S: TokenScorer + ?Sized> TokenScorer for Box<S> {
    fn score(
        &mut self,
        context: &Context<'_>,
        candidates: &[TokenId],
    ) -> Result<Vec<f64>, ScorerError> {
        (**self).score(context, candidates)
    }
}

/// Picks the highest score; ties go to the lowest token id.
pub(crate) fn select(candidates: &[TokenId], scores: &[f64]) -> Result<TokenId, ScorerError> {
    if scores.len() != candidates.len() {
        return Err(ScorerError::WrongLength {
            expected: candidates.len(),
            got: scores.len(),
        });
    }
    let mut pairs: Vec<(TokenId, f64)> = candidates.iter().copied().zip(scores.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    let mut best: Option<(TokenId, f64)> = None;
    for (t, s) in pairs {
        if !s.is_finite() {
            return Err(ScorerError::NonFinite(t));
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((t, s));
        }
    }
    best.map(|b| b.0).ok_or(ScorerError::WrongLength {
        expected: 1,
        got: 0,
    })
}

/// Scores one fixed target sequence strictly highest, step by step.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    target: Vec<TokenId>,
}

impl OracleScorer {
    pub fn new(target: Vec<TokenId>) -> Self {
        OracleScorer { target }
    }

    /// Oracle for title mode: the representation of `code` followed by END.
    pub fn for_title(vocab: &Vocabulary, ont: &Ontology, code: &str) -> Result<Self, ScorerError> {
        let mut target = vocab.tokenize(ont.representation(code)?)?;
        target.push(vocab.end());
        Ok(OracleScorer { target })
    }

    /// Oracle for annotation mode, using each mention's gold code.
    pub fn for_annotation(
        vocab: &Vocabulary,
        ont: &Ontology,
        doc: &MarkedDocument,
    ) -> Result<Self, ScorerError> {
        let codes = doc
            .mention_index
            .iter()
            .enumerate()
            .map(|(i, m)| m.gold_code.as_deref().ok_or(ScorerError::MissingGold(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::for_codes(vocab, ont, doc, &codes)
    }

    /// Oracle for annotation mode targeting arbitrary per-mention codes.
    pub fn for_codes(
        vocab: &Vocabulary,
        ont: &Ontology,
        doc: &MarkedDocument,
        codes: &[&str],
    ) -> Result<Self, ScorerError> {
        let text = render_annotation(doc, codes, ont)?;
        Ok(OracleScorer {
            target: vocab.tokenize(&text)?,
        })
    }

    pub fn target(&self) -> &[TokenId] {
        &self.target
    }
}

impl TokenScorer for OracleScorer {
    fn score(
        &mut self,
        context: &Context<'_>,
        candidates: &[TokenId],
    ) -> Result<Vec<f64>, ScorerError> {
        let gold = self.target.get(context.generated.len()).copied();
        Ok(candidates
            .iter()
            .map(|&c| if Some(c) == gold { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Uniform random scores from a seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct SeededRandomScorer {
    rng: ChaCha8Rng,
}

impl SeededRandomScorer {
    pub fn new(seed: u64) -> Self {
        SeededRandomScorer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl TokenScorer for SeededRandomScorer {
    fn score(
        &mut self,
        _context: &Context<'_>,
        candidates: &[TokenId],
    ) -> Result<Vec<f64>, ScorerError> {
        Ok(candidates.iter().map(|_| self.rng.random::<f64>()).collect())
    }
}

/// Token n-gram model over gold annotation strings, add-one smoothed.
///
/// Histories shorter than `order - 1` (sequence starts) are counted as their
/// own contexts, so early positions are scored from what is available.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>>,
    totals: HashMap<Vec<TokenId>, u64>,
    types: usize,
}

impl NgramModel {
    pub fn train(
        vocab: &Vocabulary,
        ont: &Ontology,
        corpus: &Corpus,
        order: usize,
    ) -> Result<Self, ScorerError> {
        let mut sequences = Vec::with_capacity(corpus.len());
        for doc in &corpus.documents {
            let marked = mark_mentions(doc)?;
            let codes = marked
                .mention_index
                .iter()
                .enumerate()
                .map(|(i, m)| m.gold_code.as_deref().ok_or(ScorerError::MissingGold(i)))
                .collect::<Result<Vec<_>, _>>()?;
            sequences.push(vocab.tokenize(&render_annotation(&marked, &codes, ont)?)?);
        }
        Self::from_sequences(&sequences, order)
    }

    pub fn from_sequences(sequences: &[Vec<TokenId>], order: usize) -> Result<Self, ScorerError> {
        if order == 0 {
            return Err(ScorerError::InvalidOrder);
        }
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        let mut totals: HashMap<Vec<TokenId>, u64> = HashMap::new();
        let mut seen = std::collections::HashSet::new();
        for seq in sequences {
            for (i, &t) in seq.iter().enumerate() {
                seen.insert(t);
                let history = seq[i.saturating_sub(order - 1)..i].to_vec();
                *counts.entry(history.clone()).or_default().entry(t).or_insert(0) += 1;
                *totals.entry(history).or_insert(0) += 1;
            }
        }
        Ok(NgramModel {
            order,
            counts,
            totals,
            types: seen.len(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self, history: &[TokenId], token: TokenId) -> u64 {
        self.counts
            .get(history)
            .and_then(|m| m.get(&token))
            .copied()
            .unwrap_or(0)
    }

    /// `ln((c(h,t) + 1) / (c(h) + V))` with `V` the observed type count plus
    /// one slot for unseen tokens.
    pub fn log_prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        let num = self.count(history, token) as f64 + 1.0;
        let den = self.totals.get(history).copied().unwrap_or(0) as f64 + self.types as f64 + 1.0;
        (num / den).ln()
    }
}

impl TokenScorer for &NgramModel {
    fn score(
        &mut self,
        context: &Context<'_>,
        candidates: &[TokenId],
    ) -> Result<Vec<f64>, ScorerError> {
        let history = context.tail(self.order - 1);
        Ok(candidates.iter().map(|&c| self.log_prob(&history, c)).collect())
    }
}
