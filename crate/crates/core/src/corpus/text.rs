use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};

/// Lowercases, splits on every character that is not a Unicode letter or
/// digit, and drops stopwords and single-character tokens.
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() > 1 && !stopwords.contains(t))
        .collect()
}

/// Ordered token list with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in index order. Duplicates are rejected.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Parse {
                    what: "vocabulary",
                    line: i + 1,
                    detail: format!("duplicate token {t:?}"),
                });
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// The `max_size` most frequent tokens, ordered by descending count with ties
/// broken lexicographically.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], max_size: usize) -> Result<Vocabulary> {
    if max_size == 0 {
        return Err(Error::InvalidConfig("vocabulary size must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in docs.iter().flatten() {
        *counts.entry(tok.as_ref()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_owned()).collect())
}

/// Sparse term counts over one vocabulary, sorted by term index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BowVector {
    entries: Vec<(usize, u32)>,
}

impl BowVector {
    /// Merges duplicate indices and drops zero counts.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (i, c) in pairs {
            if c > 0 {
                *merged.entry(i).or_default() += c;
            }
        }
        Self {
            entries: merged.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i)
    }

    pub fn count(&self, index: usize) -> u32 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0, |p| self.entries[p].1)
    }

    /// Word indices with multiplicity, in index order.
    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .flat_map(|&(i, c)| std::iter::repeat_n(i, c as usize))
    }
}

/// Counts in-vocabulary tokens; anything else is dropped.
pub fn to_bow<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> BowVector {
    BowVector::from_pairs(doc.iter().filter_map(|t| vocab.get(t.as_ref())).map(|i| (i, 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stop(words: &[&str]) -> HashSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The plant grows.", &stop(&["the"])), ["plant", "grows"]);
        assert!(tokenize("", &stop(&[])).is_empty());
        assert_eq!(
            tokenize("Blüten-Pflanze 42", &stop(&[])),
            ["blüten", "pflanze", "42"]
        );
        assert_eq!(tokenize("a b cd", &stop(&[])), ["cd"]);
    }

    #[test]
    fn vocabulary_examples() {
        let docs = vec![vec!["a", "a", "b"], vec!["b", "c"]];
        let v = build_vocabulary(&docs, 2).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        let all = build_vocabulary(&docs, 10).unwrap();
        assert_eq!(all.tokens(), ["a", "b", "c"]);
        let single = build_vocabulary(&[vec!["x"]], 5).unwrap();
        assert_eq!(single.tokens(), ["x"]);
    }

    #[test]
    fn vocabulary_ordering_and_errors() {
        let docs = vec![vec!["z", "y", "y", "x", "x", "w"]];
        let v = build_vocabulary(&docs, 4).unwrap();
        assert_eq!(v.tokens(), ["x", "y", "w", "z"]);
        assert_eq!(v.get("w"), Some(2));
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert!(matches!(build_vocabulary(&empty, 3), Err(Error::EmptyCorpus)));
        assert!(build_vocabulary(&docs, 0).is_err());
    }

    #[test]
    fn bow_examples() {
        let plant = Vocabulary::from_tokens(vec!["plant".into()]).unwrap();
        let bow = to_bow(&["plant", "plant", "sun"], &plant);
        assert_eq!(bow.entries(), &[(0, 2)]);
        assert!(to_bow(&["sun", "moon"], &plant).is_empty());

        let abc = Vocabulary::from_tokens(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let bow = to_bow(&["a", "b", "a", "c"], &abc);
        assert_eq!(bow.entries(), &[(0, 2), (1, 1), (2, 1)]);
        assert_eq!(bow.count(0), 2);
        assert_eq!(bow.tokens().collect::<Vec<_>>(), [0, 0, 1, 2]);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::from_tokens(vec!["a".into(), "a".into()]).is_err());
    }

    proptest! {
        #[test]
        fn bow_total_bounded_by_length(doc in proptest::collection::vec("[a-e]{1,2}", 0..40)) {
            let vocab = Vocabulary::from_tokens(vec!["a".into(), "bb".into(), "c".into(), "de".into()]).unwrap();
            let bow = to_bow(&doc, &vocab);
            let oov = doc.iter().filter(|t| vocab.get(t).is_none()).count();
            prop_assert!(bow.total() as usize <= doc.len());
            prop_assert_eq!(bow.total() as usize == doc.len(), oov == 0);
        }

        #[test]
        fn vocabulary_is_deterministic(docs in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..8), 1..6), max in 1usize..8) {
            let a = build_vocabulary(&docs, max).unwrap();
            let mut reversed = docs.clone();
            reversed.reverse();
            let b = build_vocabulary(&reversed, max).unwrap();
            prop_assert_eq!(a.tokens(), b.tokens());
            prop_assert!(a.len() <= max);
        }
    }
}
