//! `name[:param]` scorer specifications.

use std::fmt;
use std::str::FromStr;

pub const DEFAULT_NGRAM_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerSpec {
    Oracle,
    /// `None` defers to `--seed`.
    Random(Option<u64>),
    Ngram(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError(String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SpecError {}

fn positive<T: FromStr + PartialEq + From<u8>>(what: &str, raw: &str) -> Result<T, SpecError> {
    match raw.parse::<T>() {
        Ok(v) if v != T::from(0) => Ok(v),
        _ => Err(SpecError(format!("{what} must be a positive integer, got `{raw}`"))),
    }
}

impl FromStr for ScorerSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        match (name, param) {
            ("oracle", None) => Ok(ScorerSpec::Oracle),
            ("oracle", Some(_)) => Err(SpecError("the oracle scorer takes no parameter".into())),
            ("random", None) => Ok(ScorerSpec::Random(None)),
            ("random", Some(p)) => Ok(ScorerSpec::Random(Some(positive("random seed", p)?))),
            ("ngram", None) => Ok(ScorerSpec::Ngram(DEFAULT_NGRAM_ORDER)),
            ("ngram", Some(p)) => Ok(ScorerSpec::Ngram(positive("n-gram order", p)?)),
            _ => Err(SpecError(format!(
                "unknown scorer `{s}` (expected oracle, random[:seed] or ngram[:n])"
            ))),
        }
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Oracle => f.write_str("oracle"),
            ScorerSpec::Random(None) => f.write_str("random"),
            ScorerSpec::Random(Some(seed)) => write!(f, "random:{seed}"),
            ScorerSpec::Ngram(n) => write!(f, "ngram:{n}"),
        }
    }
}

/// Seed for document `index` of a run seeded with `seed`, so each document
/// gets its own stream no matter which worker decodes it.
pub fn document_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
