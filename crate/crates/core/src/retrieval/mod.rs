//! In-process BM25 index used to pick the top-`k` candidates for a bug report.

mod tokenize;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tokenize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    /// Token to `(document index, term frequency)`, document indices ascending.
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub doc_ids: Vec<String>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub params: Bm25Params,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl Bm25Index {
    pub fn build<'a, I>(docs: I, params: Bm25Params) -> Result<Bm25Index>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut lookup = HashMap::new();

        for (id, text) in docs {
            let idx = doc_ids.len() as u32;
            if lookup.insert(id.to_string(), idx).is_some() {
                return Err(Error::Validation(format!("duplicate document id `{id}`")));
            }
            let tokens = tokenize(text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (t, f) in tf {
                postings.entry(t).or_default().push((idx, f));
            }
            doc_ids.push(id.to_string());
            doc_lengths.push(tokens.len() as u32);
        }

        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(Bm25Index {
            postings,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            params,
            lookup,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.position(id).map(|i| self.doc_lengths[i as usize])
    }

    fn position(&self, id: &str) -> Option<u32> {
        if self.lookup.is_empty() && !self.doc_ids.is_empty() {
            // Deserialized index: fall back to a scan.
            return self.doc_ids.iter().position(|d| d == id).map(|i| i as u32);
        }
        self.lookup.get(id).copied()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.n_docs() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// BM25 score of every document with at least one query token.
    fn scores(&self, query: &str) -> HashMap<u32, f64> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for t in &terms {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = self.idf(list.len());
            for &(doc, tf) in list {
                let tf = tf as f64;
                let len = self.doc_lengths[doc as usize] as f64;
                let norm = 1.0 - b + b * len / self.avg_doc_length;
                *scores.entry(doc).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        scores
    }

    /// Documents with a positive score, best first, ties by id ascending.
    pub fn query_top_k(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.query_top_k_filtered(query, k, |_| true)
    }

    /// As [`Bm25Index::query_top_k`], restricted to documents accepted by
    /// `allow`.
    pub fn query_top_k_filtered(&self, query: &str, k: usize, allow: impl Fn(&str) -> bool) -> Vec<(String, f64)> {
        let mut hits: Vec<(String, f64)> = self
            .scores(query)
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, s)| (self.doc_ids[d as usize].clone(), s))
            .filter(|(id, _)| allow(id))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hits.truncate(k);
        hits
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
