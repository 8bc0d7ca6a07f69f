//! Token vocabulary and the prefix trie of entity representations.
//!
//! The trie answers one question on the decoding hot path: given the tokens
//! generated so far inside an entity, which tokens may come next. Children are
//! stored as sorted `(token, node)` pairs so a step is a binary search.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Ontology, RESERVED_CHARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("no piece matches the input at character {offset}")]
    UnknownPiece { offset: usize },
    #[error("token {0} has no text piece")]
    UnknownToken(TokenId),
    #[error("invalid piece table: {0}")]
    InvalidPieceTable(String),
    #[error("entry {0:?} contains a reserved character")]
    ReservedInEntry(String),
    #[error("no entities")]
    NoEntities,
    #[error("prefix leaves the trie at position {position}")]
    ConstraintViolation { position: usize },
    #[error("trie file: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a trie file")]
    BadMagic,
    #[error("unsupported trie file version `{0}`")]
    UnsupportedVersion(String),
    #[error("corrupt trie file: {0}")]
    Corrupt(String),
}

/// Ids of the structural tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokens {
    /// Entity complete. Has no text piece.
    pub end: TokenId,
    pub pipe: TokenId,
    pub open_brace: TokenId,
    pub close_brace: TokenId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Scheme {
    /// One token per Unicode scalar: id = `CHAR_BASE + scalar`.
    Characters,
    Pieces {
        token_of: HashMap<String, TokenId>,
        piece_of: HashMap<TokenId, String>,
        longest: usize,
    },
}

const CHAR_BASE: u32 = 4;

/// Bijection between text pieces and token ids.
///
/// `{`, `}` and `|` always tokenize to their own special ids and act as hard
/// token boundaries, so the annotation grammar survives any subword scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    specials: SpecialTokens,
    scheme: Scheme,
}

impl Vocabulary {
    /// The reference character-level vocabulary. Total over all strings.
    pub fn characters() -> Self {
        Vocabulary {
            specials: SpecialTokens {
                end: TokenId(0),
                pipe: TokenId(1),
                open_brace: TokenId(2),
                close_brace: TokenId(3),
            },
            scheme: Scheme::Characters,
        }
    }

    /// A caller-supplied piece table, e.g. exported from a subword tokenizer.
    /// Must contain the pieces `{`, `}` and `|`; `end` must not be a piece id.
    /// Tokenization is greedy longest-match.
    pub fn from_pieces<I>(pieces: I, end: TokenId) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (String, TokenId)>,
    {
        let mut token_of = HashMap::new();
        let mut piece_of = HashMap::new();
        let mut longest = 0;
        for (piece, id) in pieces {
            if piece.is_empty() {
                return Err(LexiconError::InvalidPieceTable("empty piece".into()));
            }
            if id == end {
                return Err(LexiconError::InvalidPieceTable(format!(
                    "end id {end} is also the id of piece {piece:?}"
                )));
            }
            let n = piece.chars().count();
            if n > 1 && piece.contains(RESERVED_CHARS) {
                return Err(LexiconError::InvalidPieceTable(format!(
                    "piece {piece:?} merges a reserved character"
                )));
            }
            if piece_of.insert(id, piece.clone()).is_some() {
                return Err(LexiconError::InvalidPieceTable(format!("duplicate id {id}")));
            }
            if token_of.insert(piece.clone(), id).is_some() {
                return Err(LexiconError::InvalidPieceTable(format!(
                    "duplicate piece {piece:?}"
                )));
            }
            longest = longest.max(n);
        }
        let special = |p: &str| {
            token_of
                .get(p)
                .copied()
                .ok_or_else(|| LexiconError::InvalidPieceTable(format!("missing piece {p:?}")))
        };
        let specials = SpecialTokens {
            end,
            pipe: special("|")?,
            open_brace: special("{")?,
            close_brace: special("}")?,
        };
        Ok(Vocabulary {
            specials,
            scheme: Scheme::Pieces {
                token_of,
                piece_of,
                longest,
            },
        })
    }

    pub fn specials(&self) -> SpecialTokens {
        self.specials
    }

    pub fn end(&self) -> TokenId {
        self.specials.end
    }

    pub fn pipe(&self) -> TokenId {
        self.specials.pipe
    }

    pub fn open_brace(&self) -> TokenId {
        self.specials.open_brace
    }

    pub fn close_brace(&self) -> TokenId {
        self.specials.close_brace
    }

    pub fn is_character_level(&self) -> bool {
        matches!(self.scheme, Scheme::Characters)
    }

    fn reserved_token(&self, ch: char) -> Option<TokenId> {
        match ch {
            '{' => Some(self.specials.open_brace),
            '}' => Some(self.specials.close_brace),
            '|' => Some(self.specials.pipe),
            _ => None,
        }
    }

    pub fn token_of(&self, piece: &str) -> Option<TokenId> {
        match &self.scheme {
            Scheme::Characters => {
                let mut chars = piece.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Some(
                        self.reserved_token(c)
                            .unwrap_or(TokenId(CHAR_BASE + c as u32)),
                    ),
                    _ => None,
                }
            }
            Scheme::Pieces { token_of, .. } => token_of.get(piece).copied(),
        }
    }

    pub fn piece_of(&self, id: TokenId) -> Option<std::borrow::Cow<'_, str>> {
        let s = self.specials;
        let reserved = match id {
            x if x == s.pipe => Some("|"),
            x if x == s.open_brace => Some("{"),
            x if x == s.close_brace => Some("}"),
            _ => None,
        };
        if let Some(r) = reserved {
            return Some(r.into());
        }
        match &self.scheme {
            Scheme::Characters => {
                let c = char::from_u32(id.0.checked_sub(CHAR_BASE)?)?;
                (!RESERVED_CHARS.contains(&c)).then(|| c.to_string().into())
            }
            Scheme::Pieces { piece_of, .. } => piece_of.get(&id).map(|p| p.as_str().into()),
        }
    }

    pub fn tokenize(&self, s: &str) -> Result<Vec<TokenId>, LexiconError> {
        let mut out = Vec::with_capacity(s.len());
        self.tokenize_into(s, &mut out)?;
        Ok(out)
    }

    pub fn tokenize_into(&self, s: &str, out: &mut Vec<TokenId>) -> Result<(), LexiconError> {
        match &self.scheme {
            Scheme::Characters => {
                out.extend(s.chars().map(|c| {
                    self.reserved_token(c)
                        .unwrap_or(TokenId(CHAR_BASE + c as u32))
                }));
                Ok(())
            }
            Scheme::Pieces {
                token_of, longest, ..
            } => {
                let chars: Vec<(usize, char)> = s.char_indices().collect();
                let byte_at = |i: usize| chars.get(i).map_or(s.len(), |&(b, _)| b);
                let mut i = 0;
                while i < chars.len() {
                    if let Some(t) = self.reserved_token(chars[i].1) {
                        out.push(t);
                        i += 1;
                        continue;
                    }
                    let mut limit = (*longest).min(chars.len() - i);
                    // stop at the next reserved character
                    if let Some(r) = chars[i..i + limit]
                        .iter()
                        .position(|(_, c)| RESERVED_CHARS.contains(c))
                    {
                        limit = r;
                    }
                    let found = (1..=limit).rev().find_map(|n| {
                        token_of
                            .get(&s[byte_at(i)..byte_at(i + n)])
                            .map(|&t| (t, n))
                    });
                    match found {
                        Some((t, n)) => {
                            out.push(t);
                            i += n;
                        }
                        None => return Err(LexiconError::UnknownPiece { offset: i }),
                    }
                }
                Ok(())
            }
        }
    }

    /// Concatenates the pieces of `tokens`. END has no piece and is an error.
    pub fn detokenize(&self, tokens: &[TokenId]) -> Result<String, LexiconError> {
        let mut out = String::with_capacity(tokens.len());
        for &t in tokens {
            out.push_str(&self.piece_of(t).ok_or(LexiconError::UnknownToken(t))?);
        }
        Ok(out)
    }
}

/// Index of a node inside a [`PrefixTrie`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    children: Vec<(TokenId, NodeId)>,
    terminal: bool,
}

/// Token-level trie over the canonical representations of an ontology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTrie {
    vocab: Vocabulary,
    nodes: Vec<Node>,
    entity_count: usize,
}

const MAGIC_PREFIX: &[u8; 7] = b"ICDTRIE";
const FORMAT_VERSION: u8 = b'1';

impl PrefixTrie {
    /// Builds the trie of all canonical representations of `ont`.
    pub fn build(vocab: &Vocabulary, ont: &Ontology) -> Result<Self, LexiconError> {
        Self::from_strings(vocab, ont.representations().iter().map(String::as_str))
    }

    /// Builds a trie over arbitrary strings. Duplicates collapse to one path;
    /// `{`, `}` and `|` are not allowed inside entries.
    pub fn from_strings<'a, I>(vocab: &Vocabulary, items: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut nodes = vec![Node::default()];
        let mut entity_count = 0;
        let mut tokens = Vec::new();
        for item in items {
            if item.contains(RESERVED_CHARS) {
                return Err(LexiconError::ReservedInEntry(item.to_string()));
            }
            tokens.clear();
            vocab.tokenize_into(item, &mut tokens)?;
            let mut cur = 0usize;
            for &t in &tokens {
                cur = match nodes[cur].children.binary_search_by_key(&t, |c| c.0) {
                    Ok(pos) => nodes[cur].children[pos].1 .0 as usize,
                    Err(pos) => {
                        let id = NodeId(nodes.len() as u32);
                        nodes[cur].children.insert(pos, (t, id));
                        nodes.push(Node::default());
                        id.0 as usize
                    }
                };
            }
            if !nodes[cur].terminal {
                nodes[cur].terminal = true;
                entity_count += 1;
            }
        }
        if entity_count == 0 {
            return Err(LexiconError::NoEntities);
        }
        Ok(PrefixTrie {
            vocab: vocab.clone(),
            nodes,
            entity_count,
        }
        .into_preorder())
    }

    fn into_preorder(self) -> Self {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            order.push(n);
            stack.extend(self.nodes[n].children.iter().rev().map(|c| c.1 .0 as usize));
        }
        let mut new_id = vec![0u32; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new as u32;
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let n = &self.nodes[old];
                Node {
                    children: n
                        .children
                        .iter()
                        .map(|&(t, c)| (t, NodeId(new_id[c.0 as usize])))
                        .collect(),
                    terminal: n.terminal,
                }
            })
            .collect();
        PrefixTrie { nodes, ..self }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of root-to-terminal paths.
    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        let children = &self.nodes[node.0 as usize].children;
        children
            .binary_search_by_key(&token, |c| c.0)
            .ok()
            .map(|pos| children[pos].1)
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.nodes[node.0 as usize].terminal
    }

    /// Child tokens of `node`, ascending.
    pub fn child_tokens(&self, node: NodeId) -> impl Iterator<Item = TokenId> + '_ {
        self.nodes[node.0 as usize].children.iter().map(|c| c.0)
    }

    /// Node reached by following `prefix` from the root.
    pub fn walk(&self, prefix: &[TokenId]) -> Result<NodeId, LexiconError> {
        let mut node = NodeId::ROOT;
        for (position, &t) in prefix.iter().enumerate() {
            node = self
                .child(node, t)
                .ok_or(LexiconError::ConstraintViolation { position })?;
        }
        Ok(node)
    }

    /// Allowed continuations of `prefix`, ascending, with END when the prefix
    /// spells a complete representation.
    pub fn allowed_next(&self, prefix: &[TokenId]) -> Result<Vec<TokenId>, LexiconError> {
        let node = self.walk(prefix)?;
        Ok(self.allowed_at(node))
    }

    pub fn allowed_at(&self, node: NodeId) -> Vec<TokenId> {
        let n = &self.nodes[node.0 as usize];
        let mut out = Vec::with_capacity(n.children.len() + 1);
        let end = self.vocab.end();
        let mut end_pending = n.terminal;
        for &(t, _) in &n.children {
            if end_pending && end < t {
                out.push(end);
                end_pending = false;
            }
            out.push(t);
        }
        if end_pending {
            out.push(end);
        }
        out
    }

    pub fn is_complete(&self, seq: &[TokenId]) -> bool {
        self.walk(seq).is_ok_and(|n| self.is_terminal(n))
    }

    /// Every root-to-terminal token path, in lexicographic token order.
    pub fn paths(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::with_capacity(self.entity_count);
        let mut stack: Vec<(NodeId, Vec<TokenId>)> = vec![(NodeId::ROOT, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            let n = &self.nodes[node.0 as usize];
            if n.terminal {
                out.push(path.clone());
            }
            for &(t, c) in n.children.iter().rev() {
                let mut p = path.clone();
                p.push(t);
                stack.push((c, p));
            }
        }
        out
    }

    /// Writes the `ICDTRIE1` binary format: magic, vocabulary table, then the
    /// preorder node list.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LexiconError> {
        w.write_all(MAGIC_PREFIX)?;
        w.write_u8(FORMAT_VERSION)?;
        let s = self.vocab.specials;
        for id in [s.end, s.pipe, s.open_brace, s.close_brace] {
            w.write_u32::<LittleEndian>(id.0)?;
        }
        match &self.vocab.scheme {
            Scheme::Characters => w.write_u8(0)?,
            Scheme::Pieces { piece_of, .. } => {
                w.write_u8(1)?;
                let mut table: Vec<_> = piece_of.iter().collect();
                table.sort();
                w.write_u32::<LittleEndian>(table.len() as u32)?;
                for (id, piece) in table {
                    w.write_u32::<LittleEndian>(id.0)?;
                    w.write_u32::<LittleEndian>(piece.len() as u32)?;
                    w.write_all(piece.as_bytes())?;
                }
            }
        }
        w.write_u32::<LittleEndian>(self.nodes.len() as u32)?;
        for n in &self.nodes {
            w.write_u32::<LittleEndian>(n.children.len() as u32)?;
            for &(t, c) in &n.children {
                w.write_u32::<LittleEndian>(t.0)?;
                w.write_u32::<LittleEndian>(c.0)?;
            }
            w.write_u8(n.terminal as u8)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LexiconError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| LexiconError::BadMagic)?;
        if &magic[..7] != MAGIC_PREFIX {
            return Err(LexiconError::BadMagic);
        }
        if magic[7] != FORMAT_VERSION {
            return Err(LexiconError::UnsupportedVersion(
                String::from_utf8_lossy(&magic).into_owned(),
            ));
        }
        let mut ids = [TokenId(0); 4];
        for id in &mut ids {
            *id = TokenId(r.read_u32::<LittleEndian>()?);
        }
        let vocab = match r.read_u8()? {
            0 => {
                let v = Vocabulary::characters();
                let s = v.specials;
                if ids != [s.end, s.pipe, s.open_brace, s.close_brace] {
                    return Err(LexiconError::Corrupt("character vocabulary ids".into()));
                }
                v
            }
            1 => {
                let count = r.read_u32::<LittleEndian>()? as usize;
                let mut table = Vec::with_capacity(count.min(1 << 20));
                for _ in 0..count {
                    let id = TokenId(r.read_u32::<LittleEndian>()?);
                    let len = r.read_u32::<LittleEndian>()? as usize;
                    let mut buf = vec![0u8; len];
                    r.read_exact(&mut buf)?;
                    let piece = String::from_utf8(buf)
                        .map_err(|_| LexiconError::Corrupt("piece is not UTF-8".into()))?;
                    table.push((piece, id));
                }
                let v = Vocabulary::from_pieces(table, ids[0])?;
                let s = v.specials;
                if ids != [s.end, s.pipe, s.open_brace, s.close_brace] {
                    return Err(LexiconError::Corrupt("special ids disagree with table".into()));
                }
                v
            }
            other => return Err(LexiconError::Corrupt(format!("vocabulary kind {other}"))),
        };

        let count = r.read_u32::<LittleEndian>()? as usize;
        if count == 0 {
            return Err(LexiconError::Corrupt("no nodes".into()));
        }
        let mut nodes = Vec::with_capacity(count.min(1 << 24));
        let mut referenced = vec![false; count];
        let mut entity_count = 0;
        for index in 0..count {
            let k = r.read_u32::<LittleEndian>()? as usize;
            let mut children = Vec::with_capacity(k.min(1 << 16));
            for _ in 0..k {
                let t = TokenId(r.read_u32::<LittleEndian>()?);
                let c = r.read_u32::<LittleEndian>()? as usize;
                if c <= index || c >= count || referenced[c] {
                    return Err(LexiconError::Corrupt(format!("bad child offset {c} at node {index}")));
                }
                if children.last().is_some_and(|&(prev, _)| prev >= t) {
                    return Err(LexiconError::Corrupt(format!("unsorted children at node {index}")));
                }
                referenced[c] = true;
                children.push((t, NodeId(c as u32)));
            }
            let terminal = match r.read_u8()? {
                0 => false,
                1 => true,
                other => return Err(LexiconError::Corrupt(format!("terminal flag {other}"))),
            };
            entity_count += terminal as usize;
            nodes.push(Node { children, terminal });
        }
        if referenced.iter().skip(1).any(|r| !r) {
            return Err(LexiconError::Corrupt("unreachable node".into()));
        }
        if entity_count == 0 {
            return Err(LexiconError::NoEntities);
        }
        Ok(PrefixTrie {
            vocab,
            nodes,
            entity_count,
        })
    }
}
