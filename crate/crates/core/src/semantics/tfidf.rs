//! Corpus statistics and per-document tf-idf weights.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document frequencies over a corpus, with smoothed idf
/// `ln((1 + n_docs) / (1 + df)) + 1` and length-normalised tf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    n_docs: usize,
    doc_freq: HashMap<String, usize>,
}

impl TfIdfModel {
    /// Fit on the tokenised documents of both domains.
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Data("cannot fit tf-idf on an empty corpus".into()));
        }
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut empty = 0usize;
        for doc in docs {
            if doc.is_empty() {
                empty += 1;
            }
            let distinct: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
            for t in distinct {
                *doc_freq.entry(t.to_string()).or_default() += 1;
            }
        }
        if empty > 0 {
            log::warn!("{empty} empty document(s) in the tf-idf corpus");
        }
        Ok(TfIdfModel {
            n_docs: docs.len(),
            doc_freq,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.doc_freq(token) as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Term frequencies of one document: `count / len`, keyed by distinct token.
    pub fn term_frequencies<S: AsRef<str>>(doc: &[S]) -> BTreeMap<&str, f64> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in doc {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
        let len = doc.len() as f64;
        counts
            .into_iter()
            .map(|(t, c)| (t, c as f64 / len))
            .collect()
    }

    /// tf-idf weight of every distinct token of `doc`, in token order.
    pub fn weights<'a, S: AsRef<str>>(&self, doc: &'a [S]) -> Vec<(&'a str, f64)> {
        Self::term_frequencies(doc)
            .into_iter()
            .map(|(t, tf)| (t, tf * self.idf(t)))
            .collect()
    }
}
