//! Ranked vocabulary and sparse per-author feature vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Author;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabRanking {
    /// Number of distinct authors using the term.
    #[default]
    AuthorUsage,
    /// Raw token count.
    TokenCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub size: usize,
    pub ranking: VocabRanking,
    /// Leave `@mention` tokens out of the vocabulary.
    pub exclude_mentions: bool,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            size: 10_000,
            ranking: VocabRanking::AuthorUsage,
            exclude_mentions: true,
        }
    }
}

/// Terms in rank order (rank 0 is the most frequent).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build(authors: &[Author], cfg: &VocabConfig) -> Result<Self> {
        if cfg.size == 0 {
            return Err(Error::Config {
                field: "features.size".into(),
                message: "vocabulary size must be at least 1".into(),
            });
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for a in authors {
            let toks = a
                .tokens
                .iter()
                .map(String::as_str)
                .filter(|t| !(cfg.exclude_mentions && t.starts_with('@') && t.len() > 1));
            match cfg.ranking {
                VocabRanking::AuthorUsage => {
                    for t in toks.collect::<HashSet<_>>() {
                        *counts.entry(t).or_default() += 1;
                    }
                }
                VocabRanking::TokenCount => {
                    for t in toks {
                        *counts.entry(t).or_default() += 1;
                    }
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(cfg.size);
        Ok(Self::from_ranked(ranked.into_iter().map(|(t, c)| (t.to_owned(), c))))
    }

    fn from_ranked(rows: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut v = Vocabulary::default();
        for (t, c) in rows {
            v.index.insert(t.clone(), v.terms.len());
            v.terms.push(t);
            v.counts.push(c);
        }
        v
    }

    /// Vocabulary with the given terms in order and zero counts. Duplicate
    /// terms keep their first position.
    pub fn from_terms<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        let mut seen = HashSet::new();
        Self::from_ranked(
            terms
                .into_iter()
                .map(|t| t.as_ref().to_owned())
                .filter(|t| seen.insert(t.clone()))
                .map(|t| (t, 0)),
        )
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    /// CSV with header `rank,term,author_count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "term", "author_count"])?;
        for (i, (t, c)) in self.terms.iter().zip(&self.counts).enumerate() {
            w.write_record([i.to_string(), t.clone(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<vocabulary csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |m: &str| Error::MalformedRow {
                row: i + 1,
                message: m.to_owned(),
            };
            if rec.len() != 3 {
                return Err(bad("expected rank,term,author_count"));
            }
            let rank: usize = rec[0].parse().map_err(|_| bad("bad rank"))?;
            if rank != i {
                return Err(bad("ranks must be consecutive from 0"));
            }
            let count: u64 = rec[2].parse().map_err(|_| bad("bad author_count"))?;
            rows.push((rec[1].to_owned(), count));
        }
        Ok(Self::from_ranked(rows))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Boolean,
    Count,
}

/// Sparse vector, sorted by index, without explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureVector<T: Real> {
    entries: Vec<(usize, T)>,
}

impl<T: Real> Default for FeatureVector<T> {
    fn default() -> Self {
        FeatureVector { entries: Vec::new() }
    }
}

impl<T: Real> FeatureVector<T> {
    /// Builds from arbitrary `(index, value)` pairs: duplicates are summed
    /// and zeros dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, T)>) -> Self {
        let mut map: BTreeMap<usize, T> = BTreeMap::new();
        for (i, v) in pairs {
            let e = map.entry(i).or_insert_with(T::zero);
            *e = *e + v;
        }
        FeatureVector {
            entries: map.into_iter().filter(|(_, v)| *v != T::zero()).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    pub fn get(&self, idx: usize) -> T {
        self.entries
            .binary_search_by_key(&idx, |e| e.0)
            .map_or(T::zero(), |p| self.entries[p].1)
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.entries.iter().fold(T::zero(), |acc, &(i, v)| acc + dense[i] * v)
    }

    /// Appends values at indices `offset..offset + values.len()`, which must
    /// lie past every existing index.
    pub fn append_dense(&mut self, offset: usize, values: &[T]) {
        debug_assert!(self.max_index().is_none_or(|m| m < offset));
        for (k, &v) in values.iter().enumerate() {
            if v != T::zero() {
                self.entries.push((offset + k, v));
            }
        }
    }

    /// Indices with nonzero value.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn total(&self) -> T {
        self.entries.iter().fold(T::zero(), |a, e| a + e.1)
    }
}

/// Features for a token stream. Only the first `token_budget` tokens are
/// looked at when a budget is given; out-of-vocabulary tokens are ignored.
pub fn featurize<T: Real>(
    tokens: &[String],
    vocab: &Vocabulary,
    mode: FeatureMode,
    token_budget: Option<usize>,
) -> FeatureVector<T> {
    let visible = match token_budget {
        Some(b) => &tokens[..b.min(tokens.len())],
        None => tokens,
    };
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in visible {
        if let Some(i) = vocab.get(t) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(i, c)| match mode {
            FeatureMode::Boolean => (i, T::one()),
            FeatureMode::Count => (i, T::from_count(c)),
        })
        .collect();
    FeatureVector { entries }
}

pub fn featurize_all<T: Real>(
    authors: &[Author],
    vocab: &Vocabulary,
    mode: FeatureMode,
    token_budget: Option<usize>,
) -> Vec<FeatureVector<T>> {
    use rayon::prelude::*;
    authors
        .par_iter()
        .map(|a| featurize(&a.tokens, vocab, mode, token_budget))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;
    use proptest::prelude::*;

    fn author(id: &str, toks: &[&str]) -> Author {
        Author {
            author_id: id.into(),
            first_name: id.into(),
            gender: Gender::Female,
            tokens: toks.iter().map(|s| s.to_string()).collect(),
            message_count: 1,
        }
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vocabulary_tie_rule() {
        let authors = [author("1", &["a", "b"]), author("2", &["a"]), author("3", &["a", "c"])];
        let cfg = VocabConfig {
            size: 2,
            ..Default::default()
        };
        let v = Vocabulary::build(&authors, &cfg).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        assert_eq!(v.count(0), 3);
        assert!(Vocabulary::build(&[], &cfg).unwrap().is_empty());
        assert!(Vocabulary::build(&authors, &VocabConfig { size: 0, ..cfg }).is_err());
    }

    #[test]
    fn vocabulary_by_token_count_and_mentions() {
        let authors = [author("1", &["b", "b", "b", "@x"]), author("2", &["a", "@x"]), author("3", &["a"])];
        let v = Vocabulary::build(
            &authors,
            &VocabConfig {
                size: 10,
                ranking: VocabRanking::TokenCount,
                exclude_mentions: true,
            },
        )
        .unwrap();
        assert_eq!(v.terms(), ["b", "a"]);
        let v = Vocabulary::build(
            &authors,
            &VocabConfig {
                size: 10,
                ranking: VocabRanking::AuthorUsage,
                exclude_mentions: false,
            },
        )
        .unwrap();
        assert_eq!(v.terms(), ["@x", "a", "b"]);
    }

    #[test]
    fn vocabulary_csv_roundtrip() {
        let authors = [author("1", &["a", "b,c"]), author("2", &["a"])];
        let v = Vocabulary::build(&authors, &VocabConfig::default()).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("rank,term,author_count\n0,a,2\n"));
        assert_eq!(Vocabulary::read_csv(&buf[..]).unwrap(), v);
    }

    #[test]
    fn featurize_examples() {
        let authors = [author("1", &["lol", "lol", "hi"])];
        let v = Vocabulary::build(&authors, &VocabConfig::default()).unwrap();
        assert_eq!((v.get("lol"), v.get("hi")), (Some(1), Some(0)));
        let toks = strings(&["lol", "lol", "hi", "oov"]);
        let b: FeatureVector<f64> = featurize(&toks, &v, FeatureMode::Boolean, None);
        assert_eq!(b.entries(), [(0, 1.0), (1, 1.0)]);
        let c: FeatureVector<f64> = featurize(&toks, &v, FeatureMode::Count, None);
        assert_eq!(c.entries(), [(0, 1.0), (1, 2.0)]);
        let z: FeatureVector<f64> = featurize(&toks, &v, FeatureMode::Count, Some(0));
        assert!(z.is_empty());
        let one: FeatureVector<f64> = featurize(&toks, &v, FeatureMode::Count, Some(1));
        assert_eq!(one.entries(), [(1, 1.0)]);
    }

    proptest! {
        #[test]
        fn boolean_is_support_of_count_and_prefix_consistent(
            toks in prop::collection::vec("[a-e]", 0..30),
            budget in 0usize..35,
        ) {
            let a = author("x", &toks.iter().map(String::as_str).collect::<Vec<_>>());
            let v = Vocabulary::build(std::slice::from_ref(&a), &VocabConfig { size: 3, ..Default::default() }).unwrap();
            let b: FeatureVector<f64> = featurize(&a.tokens, &v, FeatureMode::Boolean, Some(budget));
            let c: FeatureVector<f64> = featurize(&a.tokens, &v, FeatureMode::Count, Some(budget));
            prop_assert_eq!(b.support().collect::<Vec<_>>(), c.support().collect::<Vec<_>>());
            prop_assert!(b.entries().iter().all(|e| e.1 == 1.0));
            let prefix = &a.tokens[..budget.min(a.tokens.len())];
            let p: FeatureVector<f64> = featurize(prefix, &v, FeatureMode::Count, None);
            prop_assert_eq!(c, p);
        }

        #[test]
        fn vocabulary_order_invariant(docs in prop::collection::vec(prop::collection::vec("[a-f]", 1..6), 1..8)) {
            let authors: Vec<Author> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| author(&i.to_string(), &d.iter().map(String::as_str).collect::<Vec<_>>()))
                .collect();
            let mut rev = authors.clone();
            rev.reverse();
            let cfg = VocabConfig { size: 4, ..Default::default() };
            prop_assert_eq!(Vocabulary::build(&authors, &cfg).unwrap(), Vocabulary::build(&rev, &cfg).unwrap());
        }
    }
}
