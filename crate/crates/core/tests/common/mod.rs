//! Independent oracles and random instance generators shared by the
//! integration and acceptance tests. Nothing here calls the metric or trie
//! code it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use icdlink::corpus::{CodeFrequency, Corpus, Document, Mention};
use icdlink::lexicon::TokenId;
use icdlink::metrics::Assignment;
use icdlink::ontology::{IcdEntity, IcdSystem, Ontology};
use rand::seq::IndexedRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Metric oracles: direct counting from the definitions.
// ---------------------------------------------------------------------------

pub fn brute_micro(xs: &[Assignment]) -> f64 {
    let mut correct = 0.0;
    for a in xs {
        if a.gold_code == a.pred_code {
            correct += 1.0;
        }
    }
    correct / xs.len() as f64
}

pub fn brute_macro(xs: &[Assignment]) -> f64 {
    let docs: BTreeSet<&str> = xs.iter().map(|a| a.doc_id.as_str()).collect();
    let mut total = 0.0;
    for d in &docs {
        let mine: Vec<&Assignment> = xs.iter().filter(|a| a.doc_id == *d).collect();
        let right = mine.iter().filter(|a| a.gold_code == a.pred_code).count();
        total += right as f64 / mine.len() as f64;
    }
    total / docs.len() as f64
}

/// Hierarchy key of a code read straight from the entity rows: chapter,
/// subchapter, or the first three non-dot characters.
pub fn brute_level(ont: &Ontology, code: &str, level: usize) -> String {
    let e = ont.entities().iter().find(|e| e.code_id == code).unwrap();
    match level {
        0 => e.chapter_id.clone(),
        1 => e.subchapter_id.clone(),
        _ => e.code_id.replace('.', "")[..3].to_string(),
    }
}

pub fn brute_partial(xs: &[Assignment], ont: &Ontology, level: usize) -> f64 {
    let hits = xs
        .iter()
        .filter(|a| brute_level(ont, &a.gold_code, level) == brute_level(ont, &a.pred_code, level))
        .count();
    hits as f64 / xs.len() as f64
}

/// (precision, recall, f1) or None when the filtered set is empty.
pub fn brute_mlc(xs: &[Assignment], system: Option<IcdSystem>) -> Option<(f64, f64, f64)> {
    let keep: Vec<&Assignment> = xs
        .iter()
        .filter(|a| system.is_none_or(|s| a.system == s))
        .collect();
    if keep.is_empty() {
        return None;
    }
    let mut pred_pairs = BTreeSet::new();
    let mut gold_pairs = BTreeSet::new();
    for a in &keep {
        pred_pairs.insert((a.doc_id.clone(), a.pred_code.clone()));
        gold_pairs.insert((a.doc_id.clone(), a.gold_code.clone()));
    }
    let tp = pred_pairs.intersection(&gold_pairs).count() as f64;
    let p = tp / pred_pairs.len() as f64;
    let r = tp / gold_pairs.len() as f64;
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Some((p, r, f))
}

pub fn brute_few_shot(xs: &[Assignment], counts: &BTreeMap<String, usize>, k: usize) -> (Option<f64>, usize) {
    let mut right = 0;
    let mut n = 0;
    for a in xs {
        let c = counts.get(&a.gold_code).copied().unwrap_or(0);
        if c >= 1 && c <= k {
            n += 1;
            if a.gold_code == a.pred_code {
                right += 1;
            }
        }
    }
    if n == 0 {
        (None, 0)
    } else {
        (Some(right as f64 / n as f64), n)
    }
}

// ---------------------------------------------------------------------------
// Trie oracle: linear scan over all tokenized representations.
// ---------------------------------------------------------------------------

/// Next tokens of every sequence that extends `prefix`, plus `end` when some
/// sequence equals it. None when no sequence has this prefix.
pub fn brute_allowed(seqs: &[Vec<TokenId>], prefix: &[TokenId], end: TokenId) -> Option<Vec<TokenId>> {
    let mut out = BTreeSet::new();
    let mut any = false;
    for s in seqs {
        if s.len() >= prefix.len() && s[..prefix.len()] == *prefix {
            any = true;
            match s.get(prefix.len()) {
                Some(&t) => {
                    out.insert(t);
                }
                None => {
                    out.insert(end);
                }
            }
        }
    }
    any.then(|| out.into_iter().collect())
}

// ---------------------------------------------------------------------------
// Generators.
// ---------------------------------------------------------------------------

const WORDS: &[&str] = &[
    "acute", "chronic", "fever", "typhoid", "infection", "of", "the", "left", "right", "upper",
    "lower", "limb", "with", "without", "complication", "renal", "hepatic", "cardiac", "failure",
    "syndrome", "unspecified", "other", "disorder", "neoplasm", "malignant", "benign", "fracture",
    "closed", "open", "drainage", "excision", "inspection", "approach", "device", "niño", "fiebre",
];

fn phrase<R: Rng + ?Sized>(rng: &mut R, words: usize) -> String {
    let n = rng.random_range(1..=words);
    let joined = (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ");
    let mut chars = joined.chars();
    let first = chars.next().unwrap();
    first.to_uppercase().chain(chars).collect()
}

/// A KB with `n` entities over a realistic-looking chapter tree. Titles are
/// random word sequences, so collisions and shared prefixes both occur.
pub fn synthetic_kb<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Ontology {
    let chapters = (n / 500).clamp(1, 22);
    let subs_per_chapter = 8;
    let mut entities = Vec::with_capacity(n);
    let chapter_titles: Vec<String> = (0..chapters).map(|_| phrase(rng, 3)).collect();
    let sub_titles: Vec<Vec<String>> = (0..chapters)
        .map(|_| (0..subs_per_chapter).map(|_| phrase(rng, 3)).collect())
        .collect();
    for i in 0..n {
        let ch = i % chapters;
        let sub = (i / chapters) % subs_per_chapter;
        let system = if ch % 4 == 3 {
            IcdSystem::Procedure
        } else {
            IcdSystem::Diagnosis
        };
        // partial code encodes (chapter, subchapter) so partials never span
        // subchapters
        let letter = (b'A' + (ch % 26) as u8) as char;
        let code_id = format!("{letter}{sub}{}.{}", ch / 26, i);
        entities.push(IcdEntity {
            code_id,
            title: phrase(rng, 6),
            system,
            chapter_id: format!("C{ch}"),
            chapter_title: chapter_titles[ch].clone(),
            subchapter_id: format!("C{ch}S{sub}"),
            subchapter_title: sub_titles[ch][sub].clone(),
        });
    }
    Ontology::from_entities(entities).expect("synthetic KB is valid")
}

/// A tiny KB of up to `max_codes` codes with a random hierarchy shape.
pub fn tiny_kb<R: Rng + ?Sized>(rng: &mut R, max_codes: usize) -> Ontology {
    let n = rng.random_range(1..=max_codes);
    let mut entities = Vec::new();
    for i in 0..n {
        let chapter = rng.random_range(0..2);
        let sub = rng.random_range(0..2);
        let partial = rng.random_range(0..2);
        let letter = (b'A' + chapter as u8) as char;
        entities.push(IcdEntity {
            code_id: format!("{letter}{sub}{partial}.{i}"),
            title: format!("Code {i}"),
            system: if rng.random_bool(0.3) {
                IcdSystem::Procedure
            } else {
                IcdSystem::Diagnosis
            },
            chapter_id: format!("C{chapter}"),
            chapter_title: format!("Chapter {chapter}"),
            subchapter_id: format!("C{chapter}S{sub}"),
            subchapter_title: format!("Sub {chapter}.{sub}"),
        });
    }
    Ontology::from_entities(entities).unwrap()
}

/// Random assignments over `ont`: up to 5 documents with 1..=6 mentions each.
pub fn random_assignments<R: Rng + ?Sized>(rng: &mut R, ont: &Ontology) -> Vec<Assignment> {
    let codes: Vec<&IcdEntity> = ont.entities().iter().collect();
    let docs = rng.random_range(1..=5);
    let mut out = Vec::new();
    for d in 0..docs {
        for m in 0..rng.random_range(1..=6) {
            let gold = codes.choose(rng).unwrap();
            let pred = if rng.random_bool(0.4) {
                gold
            } else {
                codes.choose(rng).unwrap()
            };
            out.push(Assignment {
                doc_id: format!("d{d}"),
                mention: m,
                gold_code: gold.code_id.clone(),
                pred_code: pred.code_id.clone(),
                system: gold.system,
            });
        }
    }
    out
}

pub fn random_frequencies<R: Rng + ?Sized>(rng: &mut R, ont: &Ontology) -> CodeFrequency {
    let mut counts = BTreeMap::new();
    for e in ont.entities() {
        if rng.random_bool(0.8) {
            counts.insert(e.code_id.clone(), rng.random_range(0..=7));
        }
    }
    CodeFrequency { counts }
}

/// A random valid document over lowercase words, with mentions placed on
/// word boundaries and gold codes drawn from `codes`.
pub fn random_document<R: Rng + ?Sized>(rng: &mut R, doc_id: &str, codes: &[String]) -> Document {
    let words: Vec<&str> = (0..rng.random_range(0..=25))
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect();
    let mut text = String::new();
    let mut mentions = Vec::new();
    let mut offset = 0;
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            offset += 1;
        }
        let len = w.chars().count();
        if rng.random_bool(0.3) {
            mentions.push(Mention {
                start: offset,
                end: offset + len,
                surface: w.to_string(),
                gold_code: Some(codes.choose(rng).unwrap().clone()),
                system: IcdSystem::Diagnosis,
            });
        }
        text.push_str(w);
        offset += len;
    }
    Document {
        doc_id: doc_id.to_string(),
        language: "en".into(),
        text,
        mentions,
        substitutions: vec![],
    }
}

pub fn random_corpus<R: Rng + ?Sized>(rng: &mut R, docs: usize, codes: &[String]) -> Corpus {
    Corpus {
        documents: (0..docs)
            .map(|i| random_document(rng, &format!("doc{i}"), codes))
            .collect(),
    }
}
