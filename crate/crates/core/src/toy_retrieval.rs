//! Desk-scale retrieval engine: an inverted index with Dirichlet-smoothed
//! query-likelihood ranking.
//!
//! score(D) = Σ_q log( (tf(q,D) + μ·P(q|C)) / (|D| + μ) )
//!
//! summed over query tokens, with P(q|C) the term's collection frequency
//! over total collection tokens. Query terms absent from the whole
//! collection are dropped (the smoothed probability would be zero for
//! every document alike); documents containing no query term at all are
//! excluded rather than ranked on background mass alone.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default smoothing pseudo-count.
pub const DEFAULT_MU: f64 = 2500.0;
/// Default ranking depth.
pub const DEFAULT_K: usize = 1000;

/// One document: id, raw text, and its token count after normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub length: usize,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let length = tokenize(&text).len();
        Document {
            doc_id: doc_id.into(),
            text,
            length,
        }
    }
}

/// Lowercase fold and split on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// An ordered ranking of documents with scores, best first.
pub type Ranking = Vec<(String, f64)>;

/// Term postings plus the collection statistics the scorer needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<(String, u64)>>,
    doc_lengths: BTreeMap<String, u64>,
    collection_freq: BTreeMap<String, u64>,
    total_tokens: u64,
}

/// Build an index over a corpus. Duplicate document ids are fatal.
pub fn index_corpus(documents: &[Document]) -> Result<InvertedIndex> {
    let mut postings: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    let mut collection_freq: BTreeMap<String, u64> = BTreeMap::new();
    let mut total_tokens = 0u64;
    for doc in documents {
        let tokens = tokenize(&doc.text);
        if doc_lengths
            .insert(doc.doc_id.clone(), tokens.len() as u64)
            .is_some()
        {
            return Err(Error::Data(format!("duplicate doc_id {:?}", doc.doc_id)));
        }
        total_tokens += tokens.len() as u64;
        let mut tf: BTreeMap<&str, u64> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, count) in tf {
            *collection_freq.entry(term.to_string()).or_default() += count;
            postings
                .entry(term.to_string())
                .or_default()
                .push((doc.doc_id.clone(), count));
        }
    }
    Ok(InvertedIndex {
        postings,
        doc_lengths,
        collection_freq,
        total_tokens,
    })
}

/// Dirichlet query-likelihood score of one document given frozen collection
/// statistics. `doc_tf` maps query terms to their in-document frequencies.
pub fn dirichlet_score(
    query_tokens: &[String],
    doc_tf: &BTreeMap<String, u64>,
    doc_len: u64,
    collection_freq: &BTreeMap<String, u64>,
    total_tokens: u64,
    mu: f64,
) -> f64 {
    let mut score = 0.0;
    for q in query_tokens {
        let cf = collection_freq.get(q).copied().unwrap_or(0);
        debug_assert!(cf > 0, "collection-absent terms must be dropped upstream");
        let p_coll = cf as f64 / total_tokens as f64;
        let tf = doc_tf.get(q).copied().unwrap_or(0);
        score += ((tf as f64 + mu * p_coll) / (doc_len as f64 + mu)).ln();
    }
    score
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn collection_freq(&self, term: &str) -> u64 {
        self.collection_freq.get(term).copied().unwrap_or(0)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u64> {
        self.doc_lengths.get(doc_id).copied()
    }

    pub fn postings(&self, term: &str) -> &[(String, u64)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Rank the top `k` documents for a query. Deterministic: ties break by
    /// ascending document id. Queries whose every term is absent from the
    /// collection produce an empty ranking.
    pub fn search(&self, query: &str, k: usize, mu: f64) -> Ranking {
        assert!(k >= 1, "search: k must be at least 1");
        assert!(mu > 0.0, "search: mu must be positive");
        let tokens: Vec<String> = tokenize(query)
            .into_iter()
            .filter(|t| self.collection_freq.contains_key(t))
            .collect();
        if tokens.is_empty() {
            return Vec::new();
        }
        // Candidates: documents containing at least one query term.
        let distinct: BTreeSet<&String> = tokens.iter().collect();
        let mut candidates: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
        for term in distinct {
            for (doc, tf) in self.postings(term) {
                candidates
                    .entry(doc.as_str())
                    .or_default()
                    .insert(term.clone(), *tf);
            }
        }
        let mut scored: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|(doc, doc_tf)| {
                let len = self.doc_lengths[doc];
                let score = dirichlet_score(
                    &tokens,
                    &doc_tf,
                    len,
                    &self.collection_freq,
                    self.total_tokens,
                    mu,
                );
                (doc.to_string(), score)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

/// Parse a corpus file: `doc_id<TAB>text`, one document per line.
pub fn parse_corpus(text: &str, path: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut split = line.splitn(2, '\t');
        let (id, body) = (split.next().unwrap_or(""), split.next());
        match (id.is_empty(), body) {
            (false, Some(body)) => docs.push(Document::new(id, body)),
            _ => {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: no + 1,
                    msg: "expected doc_id<TAB>text".into(),
                })
            }
        }
    }
    Ok(docs)
}
