mod common;

use std::collections::BTreeSet;

use icdlink::fixtures;
use icdlink::lexicon::{PrefixTrie, TokenId, Vocabulary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tokenized(v: &Vocabulary, reprs: &[String]) -> Vec<Vec<TokenId>> {
    reprs.iter().map(|r| v.tokenize(r).unwrap()).collect()
}

#[test]
fn random_prefixes_agree_with_prefix_scan() {
    let v = Vocabulary::characters();
    let ont = fixtures::ontology();
    let trie = PrefixTrie::build(&v, &ont).unwrap();
    let seqs = tokenized(&v, ont.representations());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let s = &seqs[rng.random_range(0..seqs.len())];
        let prefix = &s[..rng.random_range(0..=s.len())];
        let expected = common::brute_allowed(&seqs, prefix, v.end()).unwrap();
        assert_eq!(trie.allowed_next(prefix).unwrap(), expected);
    }
}

#[test]
fn path_count_matches_representation_count() {
    let v = Vocabulary::characters();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 10, 300] {
        let ont = common::synthetic_kb(&mut rng, n);
        let trie = PrefixTrie::build(&v, &ont).unwrap();
        let paths: BTreeSet<String> = trie
            .paths()
            .iter()
            .map(|p| v.detokenize(p).unwrap())
            .collect();
        let reprs: BTreeSet<String> = ont.representations().iter().cloned().collect();
        assert_eq!(paths, reprs);
        assert_eq!(trie.entity_count(), ont.len());
    }
}

#[test]
fn random_strings_are_not_complete() {
    let v = Vocabulary::characters();
    let ont = fixtures::ontology();
    let trie = PrefixTrie::build(&v, &ont).unwrap();
    let reprs: BTreeSet<&str> = ont.representations().iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let s: String = (0..rng.random_range(0..12))
            .map(|_| rng.random_range('a'..='z'))
            .collect();
        assert_eq!(trie.is_complete(&v.tokenize(&s).unwrap()), reprs.contains(s.as_str()));
    }
}

#[test]
fn subword_vocabulary_trie_spells_representations() {
    let ont = fixtures::ontology();
    let mut pieces: BTreeSet<String> = ["{", "}", "|", " --> ", "Typhoid", "fever", "Infectious"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for r in ont.representations() {
        pieces.extend(r.chars().map(|c| c.to_string()));
    }
    let table = pieces
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, TokenId(1000 + i as u32)));
    let v = Vocabulary::from_pieces(table, TokenId(2)).unwrap();
    let trie = PrefixTrie::build(&v, &ont).unwrap();
    let seqs = tokenized(&v, ont.representations());
    assert!(seqs.iter().all(|s| trie.is_complete(s)));
    // the multi-character pieces are actually used
    assert!(seqs[0].len() < ont.representations()[0].chars().count());
    let spelled: BTreeSet<String> = trie.paths().iter().map(|p| v.detokenize(p).unwrap()).collect();
    assert_eq!(spelled.len(), 3);
}

fn toy_words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-c]{1,5}", 1..12)
}

proptest! {
    #[test]
    fn walks_always_end_in_a_member(words in toy_words(), choices in prop::collection::vec(any::<u16>(), 0..40)) {
        let v = Vocabulary::characters();
        let trie = PrefixTrie::from_strings(&v, words.iter().map(String::as_str)).unwrap();
        let members: BTreeSet<&str> = words.iter().map(String::as_str).collect();
        let mut prefix = Vec::new();
        let mut choices = choices.into_iter().chain(std::iter::repeat(0));
        loop {
            let allowed = trie.allowed_next(&prefix).unwrap();
            // no dead ends
            prop_assert!(!allowed.is_empty());
            let pick = allowed[choices.next().unwrap() as usize % allowed.len()];
            if pick == v.end() {
                break;
            }
            prefix.push(pick);
        }
        let word = v.detokenize(&prefix).unwrap();
        prop_assert!(members.contains(word.as_str()));
        prop_assert!(trie.is_complete(&prefix));
    }

    #[test]
    fn every_member_is_complete(words in toy_words()) {
        let v = Vocabulary::characters();
        let trie = PrefixTrie::from_strings(&v, words.iter().map(String::as_str)).unwrap();
        for w in &words {
            prop_assert!(trie.is_complete(&v.tokenize(w).unwrap()));
        }
        let distinct: BTreeSet<&String> = words.iter().collect();
        prop_assert_eq!(trie.entity_count(), distinct.len());
    }

    #[test]
    fn queries_are_pure(words in toy_words(), prefix in "[a-c]{0,4}") {
        let v = Vocabulary::characters();
        let trie = PrefixTrie::from_strings(&v, words.iter().map(String::as_str)).unwrap();
        let p = v.tokenize(&prefix).unwrap();
        let first = trie.allowed_next(&p).ok();
        let snapshot = trie.clone();
        prop_assert_eq!(first, trie.allowed_next(&p).ok());
        prop_assert_eq!(snapshot, trie);
    }

    #[test]
    fn character_tokenizer_round_trips(s in "\\PC{0,40}") {
        let v = Vocabulary::characters();
        let t = v.tokenize(&s).unwrap();
        prop_assert_eq!(t.len(), s.chars().count());
        prop_assert_eq!(v.detokenize(&t).unwrap(), s);
    }

    #[test]
    fn serialized_trie_answers_identically(words in toy_words()) {
        let v = Vocabulary::characters();
        let trie = PrefixTrie::from_strings(&v, words.iter().map(String::as_str)).unwrap();
        let mut buf = Vec::new();
        trie.write_to(&mut buf).unwrap();
        let loaded = PrefixTrie::read_from(&buf[..]).unwrap();
        for w in &words {
            let t = v.tokenize(w).unwrap();
            for i in 0..=t.len() {
                prop_assert_eq!(loaded.allowed_next(&t[..i]).unwrap(), trie.allowed_next(&t[..i]).unwrap());
            }
        }
    }
}
