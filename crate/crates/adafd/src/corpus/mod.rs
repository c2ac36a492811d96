//! Text corpora: ingestion, tokenization, feature extraction, and a
//! synthetic multi-domain generator for self-contained experiments.

mod ingest;
mod synth;

pub use ingest::{ingest, IngestFormat, IngestSchema};
pub use synth::{synthesize_corpus, SynthSpec};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single text instance; the unit of all partitioning and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    /// Class index in `[0, C)`, absent for unlabeled (public) data.
    pub label: Option<usize>,
    pub domain: String,
}

/// An ordered collection of examples with a fixed label space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    /// Human-readable label names, index-aligned with class indices.
    pub label_names: Vec<String>,
}

impl Corpus {
    pub fn new(examples: Vec<Example>, num_classes: usize, label_names: Vec<String>) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.text.is_empty() {
                return Err(Error::InvalidInput(format!("example {i} has empty text")));
            }
            if let Some(l) = ex.label {
                if l >= num_classes {
                    return Err(Error::InvalidInput(format!(
                        "example {i} has label {l} >= num_classes {num_classes}"
                    )));
                }
            }
        }
        Ok(Corpus {
            examples,
            num_classes,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The set of domain tags present, sorted.
    pub fn domains(&self) -> BTreeSet<String> {
        self.examples.iter().map(|e| e.domain.clone()).collect()
    }
}

/// Lowercases and splits on non-alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMode {
    /// Token map built from the public corpus only; no private statistics leak.
    PublicOnly,
    /// Stateless feature hashing; no shared token map at all.
    Hashed,
}

/// Token-to-feature-index map plus the public-corpus document frequencies
/// needed for TF-IDF.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub mode: VocabMode,
    pub size: usize,
    /// Present in `PublicOnly` mode; index = position.
    pub tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
    /// Document frequency per feature over the public corpus.
    pub doc_freq: Vec<u32>,
    /// Number of public documents the frequencies were computed from.
    pub num_public_docs: u32,
}

// FNV-1a; a fixed hash so hashed features are stable across builds.
fn fnv1a(token: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Vocabulary {
    pub fn feature_index(&self, token: &str) -> Option<usize> {
        match self.mode {
            VocabMode::PublicOnly => self.index.get(token).copied(),
            VocabMode::Hashed => Some((fnv1a(token) % self.size as u64) as usize),
        }
    }

    /// Rebuilds the internal token index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    /// One token per line; feature index = line number.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }
}

/// Builds a vocabulary of at most `max_features` tokens ranked by descending
/// public-corpus document frequency, ties broken lexicographically.
pub fn build_vocabulary(public: &Corpus, max_features: usize, mode: VocabMode) -> Result<Vocabulary> {
    assert!(max_features > 0, "max_features must be positive");
    if mode == VocabMode::PublicOnly && public.is_empty() {
        return Err(Error::InvalidInput(
            "public corpus is empty; cannot build a public_only vocabulary".into(),
        ));
    }
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for ex in &public.examples {
        let toks: BTreeSet<String> = tokenize(&ex.text).into_iter().collect();
        for t in toks {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    match mode {
        VocabMode::PublicOnly => {
            let mut ranked: Vec<(String, u32)> = df.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(max_features);
            let tokens: Vec<String> = ranked.iter().map(|(t, _)| t.clone()).collect();
            let doc_freq: Vec<u32> = ranked.iter().map(|(_, c)| *c).collect();
            let index = tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i))
                .collect();
            Ok(Vocabulary {
                mode,
                size: tokens.len(),
                tokens,
                index,
                doc_freq,
                num_public_docs: public.len() as u32,
            })
        }
        VocabMode::Hashed => {
            let mut doc_freq = vec![0u32; max_features];
            for (t, c) in df {
                let idx = (fnv1a(&t) % max_features as u64) as usize;
                doc_freq[idx] += c;
            }
            Ok(Vocabulary {
                mode,
                size: max_features,
                tokens: Vec::new(),
                index: BTreeMap::new(),
                doc_freq,
                num_public_docs: public.len() as u32,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScheme {
    Counts,
    Tfidf,
}

/// Sparse row-major feature matrix, rows aligned with the source corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Per row: sorted `(feature index, value)` pairs.
    pub rows: Vec<Vec<(u32, f64)>>,
    pub num_features: usize,
    pub labels: Option<Vec<usize>>,
}

impl FeatureMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Selects a subset of rows (and labels, when present) by index.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            num_features: self.num_features,
            labels: self
                .labels
                .as_ref()
                .map(|ls| indices.iter().map(|&i| ls[i]).collect()),
        }
    }

    /// Drops the label column.
    pub fn without_labels(&self) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.rows.clone(),
            num_features: self.num_features,
            labels: None,
        }
    }
}

/// Featurizes a corpus against a vocabulary. Out-of-vocabulary tokens are
/// dropped; TF-IDF idf = ln(N/df) with statistics from the public corpus
/// the vocabulary was built on.
pub fn featurize(corpus: &Corpus, vocab: &Vocabulary, scheme: FeatureScheme) -> FeatureMatrix {
    let n_public = vocab.num_public_docs as f64;
    let mut rows = Vec::with_capacity(corpus.len());
    for ex in &corpus.examples {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(&ex.text) {
            if let Some(idx) = vocab.feature_index(&tok) {
                *counts.entry(idx).or_insert(0.0) += 1.0;
            }
        }
        let row: Vec<(u32, f64)> = match scheme {
            FeatureScheme::Counts => counts.into_iter().map(|(i, c)| (i as u32, c)).collect(),
            FeatureScheme::Tfidf => counts
                .into_iter()
                .map(|(i, c)| {
                    let df = vocab.doc_freq.get(i).copied().unwrap_or(0) as f64;
                    let idf = if df > 0.0 { (n_public / df).ln() } else { 0.0 };
                    (i as u32, c * idf)
                })
                .collect(),
        };
        rows.push(row);
    }
    let labels: Option<Vec<usize>> = if corpus.examples.iter().all(|e| e.label.is_some()) {
        Some(corpus.examples.iter().map(|e| e.label.unwrap()).collect())
    } else {
        None
    };
    FeatureMatrix {
        rows,
        num_features: vocab.size,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_from(texts: &[&str]) -> Corpus {
        let examples = texts
            .iter()
            .map(|t| Example {
                text: t.to_string(),
                label: None,
                domain: "d".into(),
            })
            .collect();
        Corpus::new(examples, 2, vec!["neg".into(), "pos".into()]).unwrap()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Great stroller!"), vec!["great", "stroller"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("A-1 grade"), vec!["a", "1", "grade"]);
    }

    #[test]
    fn vocabulary_ranked_by_doc_freq() {
        // a in 3 docs, b in 2, c in 1
        let c = corpus_from(&["a b c", "a b", "a"]);
        let v = build_vocabulary(&c, 2, VocabMode::PublicOnly).unwrap();
        assert_eq!(v.tokens, vec!["a", "b"]);
        assert_eq!(v.feature_index("a"), Some(0));
        assert_eq!(v.feature_index("b"), Some(1));
        assert_eq!(v.feature_index("c"), None);
    }

    #[test]
    fn vocabulary_tie_break_lexicographic() {
        let c = corpus_from(&["b a", "b a"]);
        let v = build_vocabulary(&c, 2, VocabMode::PublicOnly).unwrap();
        assert_eq!(v.tokens, vec!["a", "b"]);
    }

    #[test]
    fn vocabulary_capped() {
        let c = corpus_from(&["a b c d e f g"]);
        let v = build_vocabulary(&c, 5000, VocabMode::PublicOnly).unwrap();
        assert!(v.size <= 5000);
    }

    #[test]
    fn hashed_mode_fixed_size() {
        let c = corpus_from(&["a b"]);
        let v = build_vocabulary(&c, 64, VocabMode::Hashed).unwrap();
        assert_eq!(v.size, 64);
        assert!(v.feature_index("anything").unwrap() < 64);
    }

    #[test]
    fn empty_public_corpus_errors() {
        let c = Corpus::new(vec![], 2, vec![]).unwrap();
        assert!(build_vocabulary(&c, 10, VocabMode::PublicOnly).is_err());
    }

    #[test]
    fn featurize_counts() {
        let c = corpus_from(&["a a b"]);
        let public = corpus_from(&["a b", "a", "b c"]);
        let v = build_vocabulary(&public, 2, VocabMode::PublicOnly).unwrap();
        let m = featurize(&c, &v, FeatureScheme::Counts);
        assert_eq!(m.rows[0], vec![(0, 2.0), (1, 1.0)]);
    }

    #[test]
    fn featurize_oov_only_gives_empty_row() {
        let c = corpus_from(&["zzz qqq"]);
        let public = corpus_from(&["a b"]);
        let v = build_vocabulary(&public, 2, VocabMode::PublicOnly).unwrap();
        let m = featurize(&c, &v, FeatureScheme::Counts);
        assert!(m.rows[0].is_empty());
    }

    #[test]
    fn tfidf_everywhere_token_weighs_zero() {
        // Oracle: idf = ln(N/df) on a 3-doc toy corpus. "a" appears in all 3
        // docs so idf("a") = ln(3/3) = 0; "b" in 1 doc so idf("b") = ln 3.
        let public = corpus_from(&["a b", "a", "a c"]);
        let v = build_vocabulary(&public, 10, VocabMode::PublicOnly).unwrap();
        let doc = corpus_from(&["a b"]);
        let m = featurize(&doc, &v, FeatureScheme::Tfidf);
        let row: std::collections::BTreeMap<u32, f64> = m.rows[0].iter().copied().collect();
        let a_idx = v.feature_index("a").unwrap() as u32;
        let b_idx = v.feature_index("b").unwrap() as u32;
        assert_eq!(row[&a_idx], 0.0);
        assert!((row[&b_idx] - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tfidf_idf_depends_only_on_public_corpus() {
        let public = corpus_from(&["a b", "a", "a c"]);
        let v = build_vocabulary(&public, 10, VocabMode::PublicOnly).unwrap();
        let doc = corpus_from(&["a b"]);
        let m1 = featurize(&doc, &v, FeatureScheme::Tfidf);
        // Mutating a "private" corpus cannot change anything: the vocabulary is
        // a pure function of the public corpus.
        let _private = corpus_from(&["x y z completely different"]);
        let m2 = featurize(&doc, &v, FeatureScheme::Tfidf);
        assert_eq!(m1, m2);
    }

    #[test]
    fn featurize_preserves_row_order_and_count() {
        let c = corpus_from(&["a", "b", "a b", "c"]);
        let public = corpus_from(&["a b c"]);
        let v = build_vocabulary(&public, 3, VocabMode::PublicOnly).unwrap();
        let m = featurize(&c, &v, FeatureScheme::Counts);
        assert_eq!(m.num_rows(), 4);
        assert_eq!(m.rows[3].len(), 1);
    }
}
