//! Constrained greedy decoding.
//!
//! Two modes share the same trie:
//!
//! * **Title mode** generates one canonical representation. At each step the
//!   candidates are the trie children of the current prefix, plus END when the
//!   prefix is complete.
//! * **Annotation mode** rewrites a marked document
//!   (`acute {typhoid fever b} ...`) into
//!   `acute {typhoid fever b}|Chapter --> Subchapter --> Title| ...`.
//!   Outside an entity the only continuation is the next input token; after a
//!   mention's closing brace the only continuation is `|`; inside an entity the
//!   trie decides, with a terminal node offering `|` to close.
//!
//! Both modes are exposed as stepping sessions ([`TitleSession`],
//! [`AnnotationSession`]) so an external inference loop can use them as a
//! logits mask. [`Decoder`] drives the same sessions with a [`TokenScorer`].

use thiserror::Error;

use crate::corpus::MarkedDocument;
use crate::lexicon::{LexiconError, NodeId, PrefixTrie, TokenId, Vocabulary};
use crate::ontology::{Ontology, OntologyError};
use crate::scorer::{select, Context, ScorerError, TokenScorer};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("unbalanced braces in marked document at character {position}")]
    UnbalancedBraces { position: usize },
    #[error("marked document contains `|` at character {position}")]
    StrayPipe { position: usize },
    #[error("marked document has {braces} brace pairs but {mentions} mentions")]
    MentionCountMismatch { braces: usize, mentions: usize },
    #[error("token {token} is not allowed at step {step}")]
    Disallowed { token: TokenId, step: usize },
    #[error("session is already complete")]
    Finished,
    #[error("session is not complete")]
    Unfinished,
    #[error("history diverges from session at position {position}")]
    Diverged { position: usize },
    #[error("inconsistent annotation state: {0}")]
    InconsistentState(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Outside any mention: copy the next input token.
    Copy,
    /// Inside `{ ... }`: still copying.
    MentionBody,
    /// Right after `}`: the entity block must open with `|`.
    EntityOpen,
    /// Inside `| ... |`: generating a representation from the trie.
    InEntity,
    /// The whole input has been copied.
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationState {
    pub phase: Phase,
    /// Position of the next input token to copy.
    pub cursor: usize,
    /// Tokens generated inside the current entity block.
    pub entity_prefix: Vec<TokenId>,
}

impl AnnotationState {
    pub fn initial(input: &MarkedInput) -> Self {
        AnnotationState {
            phase: if input.tokens.is_empty() {
                Phase::Done
            } else {
                Phase::Copy
            },
            cursor: 0,
            entity_prefix: Vec::new(),
        }
    }
}

/// A marked document in token form, with its brace structure validated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedInput {
    pub tokens: Vec<TokenId>,
    pub mentions: usize,
}

impl MarkedInput {
    pub fn new(vocab: &Vocabulary, doc: &MarkedDocument) -> Result<Self, DecodeError> {
        let mut open = false;
        let mut braces = 0;
        for (position, ch) in doc.marked_text.chars().enumerate() {
            match ch {
                '{' if open => return Err(DecodeError::UnbalancedBraces { position }),
                '{' => open = true,
                '}' if !open => return Err(DecodeError::UnbalancedBraces { position }),
                '}' => {
                    open = false;
                    braces += 1;
                }
                '|' => return Err(DecodeError::StrayPipe { position }),
                _ => {}
            }
        }
        if open {
            return Err(DecodeError::UnbalancedBraces {
                position: doc.marked_text.chars().count(),
            });
        }
        if braces != doc.mention_index.len() {
            return Err(DecodeError::MentionCountMismatch {
                braces,
                mentions: doc.mention_index.len(),
            });
        }
        Ok(MarkedInput {
            tokens: vocab.tokenize(&doc.marked_text)?,
            mentions: braces,
        })
    }
}

fn entity_candidates(trie: &PrefixTrie, node: NodeId) -> Vec<TokenId> {
    let vocab = trie.vocabulary();
    let mut out: Vec<TokenId> = trie.child_tokens(node).collect();
    if trie.is_terminal(node) {
        let pos = out.binary_search(&vocab.pipe()).unwrap_or_else(|p| p);
        out.insert(pos, vocab.pipe());
    }
    out
}

/// Continuations permitted in `state`. Empty only when the phase is `Done`.
pub fn allowed_continuations(
    state: &AnnotationState,
    input: &MarkedInput,
    trie: &PrefixTrie,
) -> Result<Vec<TokenId>, DecodeError> {
    if state.cursor > input.tokens.len() {
        return Err(DecodeError::InconsistentState("cursor past end of input"));
    }
    let vocab = trie.vocabulary();
    match state.phase {
        Phase::Copy | Phase::MentionBody => {
            if !state.entity_prefix.is_empty() {
                return Err(DecodeError::InconsistentState("entity prefix outside an entity"));
            }
            match input.tokens.get(state.cursor) {
                Some(&t) => Ok(vec![t]),
                None => Err(DecodeError::InconsistentState("copy phase at end of input")),
            }
        }
        Phase::EntityOpen => Ok(vec![vocab.pipe()]),
        Phase::InEntity => {
            let node = trie
                .walk(&state.entity_prefix)
                .map_err(|_| DecodeError::InconsistentState("entity prefix is not a trie path"))?;
            Ok(entity_candidates(trie, node))
        }
        Phase::Done => {
            if state.cursor != input.tokens.len() {
                return Err(DecodeError::InconsistentState("done before end of input"));
            }
            Ok(Vec::new())
        }
    }
}

fn check_history(generated: &[TokenId], history: &[TokenId]) -> Result<(), DecodeError> {
    let common = generated
        .iter()
        .zip(history)
        .take_while(|(a, b)| a == b)
        .count();
    if common != generated.len() || common != history.len() {
        return Err(DecodeError::Diverged { position: common });
    }
    Ok(())
}

/// Stepping session for title mode.
#[derive(Debug, Clone)]
pub struct TitleSession<'t> {
    trie: &'t PrefixTrie,
    node: NodeId,
    generated: Vec<TokenId>,
    done: bool,
}

impl<'t> TitleSession<'t> {
    pub fn new(trie: &'t PrefixTrie) -> Self {
        TitleSession {
            trie,
            node: NodeId::ROOT,
            generated: Vec::new(),
            done: false,
        }
    }

    /// Allowed next tokens (END included when the prefix is complete);
    /// empty once END has been taken.
    pub fn allowed(&self) -> Vec<TokenId> {
        if self.done {
            Vec::new()
        } else {
            self.trie.allowed_at(self.node)
        }
    }

    /// Same as [`TitleSession::allowed`], after checking that `history` is
    /// exactly what this session has generated.
    pub fn allowed_after(&self, history: &[TokenId]) -> Result<Vec<TokenId>, DecodeError> {
        check_history(&self.generated, history)?;
        Ok(self.allowed())
    }

    /// Advances by one token; returns true once END is taken.
    pub fn step(&mut self, token: TokenId) -> Result<bool, DecodeError> {
        if self.done {
            return Err(DecodeError::Finished);
        }
        let step = self.generated.len();
        if token == self.trie.vocabulary().end() && self.trie.is_terminal(self.node) {
            self.generated.push(token);
            self.done = true;
            return Ok(true);
        }
        self.node = self
            .trie
            .child(self.node, token)
            .ok_or(DecodeError::Disallowed { token, step })?;
        self.generated.push(token);
        Ok(false)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.generated
    }

    /// Resolves the finished title to its code.
    pub fn finish(&self, ont: &Ontology) -> Result<String, DecodeError> {
        if !self.done {
            return Err(DecodeError::Unfinished);
        }
        let body = &self.generated[..self.generated.len() - 1];
        let text = self.trie.vocabulary().detokenize(body)?;
        Ok(ont.resolve(&text)?.to_string())
    }
}

/// Output of annotation mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationResult {
    pub annotated_text: String,
    /// Code per mention, in mention order.
    pub assignments: Vec<String>,
}

/// Progress report from [`AnnotationSession::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepStatus {
    pub done: bool,
    pub assignments: usize,
}

/// Stepping session for annotation mode.
#[derive(Debug, Clone)]
pub struct AnnotationSession<'t> {
    trie: &'t PrefixTrie,
    ont: &'t Ontology,
    input: MarkedInput,
    state: AnnotationState,
    node: NodeId,
    generated: Vec<TokenId>,
    assignments: Vec<String>,
}

impl<'t> AnnotationSession<'t> {
    pub fn new(
        trie: &'t PrefixTrie,
        ont: &'t Ontology,
        doc: &MarkedDocument,
    ) -> Result<Self, DecodeError> {
        let input = MarkedInput::new(trie.vocabulary(), doc)?;
        Ok(Self::from_input(trie, ont, input))
    }

    pub fn from_input(trie: &'t PrefixTrie, ont: &'t Ontology, input: MarkedInput) -> Self {
        AnnotationSession {
            trie,
            ont,
            state: AnnotationState::initial(&input),
            input,
            node: NodeId::ROOT,
            generated: Vec::new(),
            assignments: Vec::new(),
        }
    }

    pub fn input(&self) -> &MarkedInput {
        &self.input
    }

    pub fn state(&self) -> &AnnotationState {
        &self.state
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.generated
    }

    pub fn assignments(&self) -> &[String] {
        &self.assignments
    }

    pub fn is_done(&self) -> bool {
        self.state.phase == Phase::Done
    }

    pub fn allowed(&self) -> Vec<TokenId> {
        match self.state.phase {
            Phase::Copy | Phase::MentionBody => vec![self.input.tokens[self.state.cursor]],
            Phase::EntityOpen => vec![self.trie.vocabulary().pipe()],
            Phase::InEntity => entity_candidates(self.trie, self.node),
            Phase::Done => Vec::new(),
        }
    }

    pub fn allowed_after(&self, history: &[TokenId]) -> Result<Vec<TokenId>, DecodeError> {
        check_history(&self.generated, history)?;
        Ok(self.allowed())
    }

    pub fn step(&mut self, token: TokenId) -> Result<StepStatus, DecodeError> {
        let step = self.generated.len();
        let vocab = self.trie.vocabulary();
        let disallowed = DecodeError::Disallowed { token, step };
        match self.state.phase {
            Phase::Done => return Err(DecodeError::Finished),
            Phase::Copy | Phase::MentionBody => {
                if token != self.input.tokens[self.state.cursor] {
                    return Err(disallowed);
                }
                self.state.cursor += 1;
                self.state.phase = if token == vocab.open_brace() {
                    Phase::MentionBody
                } else if token == vocab.close_brace() {
                    Phase::EntityOpen
                } else {
                    self.state.phase
                };
            }
            Phase::EntityOpen => {
                if token != vocab.pipe() {
                    return Err(disallowed);
                }
                self.state.phase = Phase::InEntity;
                self.node = NodeId::ROOT;
            }
            Phase::InEntity => {
                if token == vocab.pipe() {
                    if !self.trie.is_terminal(self.node) {
                        return Err(disallowed);
                    }
                    let text = vocab.detokenize(&self.state.entity_prefix)?;
                    let code = self.ont.resolve(&text)?.to_string();
                    self.assignments.push(code);
                    self.state.entity_prefix.clear();
                    self.state.phase = Phase::Copy;
                } else {
                    self.node = self.trie.child(self.node, token).ok_or(disallowed)?;
                    self.state.entity_prefix.push(token);
                }
            }
        }
        if self.state.phase == Phase::Copy && self.state.cursor == self.input.tokens.len() {
            self.state.phase = Phase::Done;
        }
        self.generated.push(token);
        Ok(StepStatus {
            done: self.is_done(),
            assignments: self.assignments.len(),
        })
    }

    pub fn finish(self) -> Result<AnnotationResult, DecodeError> {
        if !self.is_done() {
            return Err(DecodeError::Unfinished);
        }
        Ok(AnnotationResult {
            annotated_text: self.trie.vocabulary().detokenize(&self.generated)?,
            assignments: self.assignments,
        })
    }
}

/// Greedy constrained decoder over a shared ontology and trie.
#[derive(Debug, Clone, Copy)]
pub struct Decoder<'a> {
    ont: &'a Ontology,
    trie: &'a PrefixTrie,
}

impl<'a> Decoder<'a> {
    pub fn new(ont: &'a Ontology, trie: &'a PrefixTrie) -> Self {
        Decoder { ont, trie }
    }

    pub fn ontology(&self) -> &'a Ontology {
        self.ont
    }

    pub fn trie(&self) -> &'a PrefixTrie {
        self.trie
    }

    pub fn vocabulary(&self) -> &'a Vocabulary {
        self.trie.vocabulary()
    }

    /// Generates one entity for `prompt` and returns its code.
    pub fn generate_title<S: TokenScorer + ?Sized>(
        &self,
        scorer: &mut S,
        prompt: &[TokenId],
    ) -> Result<String, DecodeError> {
        let mut session = TitleSession::new(self.trie);
        loop {
            let candidates = session.allowed();
            let context = Context {
                prompt,
                generated: session.generated(),
            };
            let scores = scorer.score(&context, &candidates)?;
            let choice = select(&candidates, &scores)?;
            if session.step(choice)? {
                return session.finish(self.ont);
            }
        }
    }

    /// Annotates every mention of `doc` in a single pass.
    pub fn annotate_document<S: TokenScorer + ?Sized>(
        &self,
        scorer: &mut S,
        doc: &MarkedDocument,
    ) -> Result<AnnotationResult, DecodeError> {
        let mut session = AnnotationSession::new(self.trie, self.ont, doc)?;
        let prompt = session.input().tokens.clone();
        while !session.is_done() {
            let candidates = session.allowed();
            let context = Context {
                prompt: &prompt,
                generated: session.generated(),
            };
            let scores = scorer.score(&context, &candidates)?;
            let choice = select(&candidates, &scores)?;
            session.step(choice)?;
        }
        session.finish()
    }
}

/// The annotated text that assigns `codes[i]` to the i-th mention of `doc`.
pub fn render_annotation(
    doc: &MarkedDocument,
    codes: &[&str],
    ont: &Ontology,
) -> Result<String, OntologyError> {
    let mut out = String::with_capacity(doc.marked_text.len() + 64 * codes.len());
    let mut codes = codes.iter();
    for ch in doc.marked_text.chars() {
        out.push(ch);
        if ch == '}' {
            // a missing code renders an empty block, which will not resolve
            let repr = match codes.next() {
                Some(code) => ont.representation(code)?,
                None => "",
            };
            out.push('|');
            out.push_str(repr);
            out.push('|');
        }
    }
    Ok(out)
}

/// Removes every `|...|` entity block.
pub fn strip_entity_blocks(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut inside = false;
    for ch in text.chars() {
        if ch == '|' {
            inside = !inside;
        } else if !inside {
            out.push(ch);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnbalancedBraces,
    NestedMention,
    MissingEntityBlock,
    PipeOutsideEntityBlock,
    UnterminatedEntity,
    UnresolvableEntity,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ParseErrorKind::UnbalancedBraces => "unbalanced braces",
            ParseErrorKind::NestedMention => "nested mention",
            ParseErrorKind::MissingEntityBlock => "mention not followed by an entity block",
            ParseErrorKind::PipeOutsideEntityBlock => "pipe block not immediately following `}`",
            ParseErrorKind::UnterminatedEntity => "unterminated entity block",
            ParseErrorKind::UnresolvableEntity => "unresolvable entity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at character {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

/// Parses `{mention}|entity|` blocks back into per-mention codes.
pub fn parse_annotation(text: &str, ont: &Ontology) -> Result<AnnotationResult, ParseError> {
    enum State {
        Outside,
        Mention,
        AfterClose,
        Entity(usize, String),
    }
    let err = |kind, position| ParseError { kind, position };
    let mut assignments = Vec::new();
    let mut state = State::Outside;
    let mut mention_open = 0;
    for (i, ch) in text.chars().enumerate() {
        state = match (state, ch) {
            (State::Outside, '{') => {
                mention_open = i;
                State::Mention
            }
            (State::Outside, '}') => return Err(err(ParseErrorKind::UnbalancedBraces, i)),
            (State::Outside, '|') => return Err(err(ParseErrorKind::PipeOutsideEntityBlock, i)),
            (State::Outside, _) => State::Outside,
            (State::Mention, '{') => return Err(err(ParseErrorKind::NestedMention, i)),
            (State::Mention, '}') => State::AfterClose,
            (State::Mention, '|') => return Err(err(ParseErrorKind::PipeOutsideEntityBlock, i)),
            (State::Mention, _) => State::Mention,
            (State::AfterClose, '|') => State::Entity(i + 1, String::new()),
            (State::AfterClose, _) => return Err(err(ParseErrorKind::MissingEntityBlock, i)),
            (State::Entity(start, repr), '|') => {
                let code = ont
                    .resolve(&repr)
                    .map_err(|_| err(ParseErrorKind::UnresolvableEntity, start))?;
                assignments.push(code.to_string());
                State::Outside
            }
            (State::Entity(start, mut repr), c) => {
                repr.push(c);
                State::Entity(start, repr)
            }
        };
    }
    let end = text.chars().count();
    match state {
        State::Outside => Ok(AnnotationResult {
            annotated_text: text.to_string(),
            assignments,
        }),
        State::Mention => Err(err(ParseErrorKind::UnbalancedBraces, mention_open)),
        State::AfterClose => Err(err(ParseErrorKind::MissingEntityBlock, end)),
        State::Entity(..) => Err(err(ParseErrorKind::UnterminatedEntity, end)),
    }
}
