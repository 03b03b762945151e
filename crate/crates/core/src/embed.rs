//! Text embeddings for candidates and bug reports.
//!
//! The default embedder hashes retrieval tokens into `dim` signed buckets and
//! L2-normalizes. Precomputed vectors (for example from a code language model
//! run offline) can be supplied instead through an external JSON file mapping
//! unit ids, and `report:<bug id>` for reports, to arrays of `dim` reals.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Embedding {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Embedding { values, norm }
    }

    pub fn zeros(dim: usize) -> Embedding {
        Embedding { values: vec![0.0; dim], norm: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot / (self.norm * other.norm)
    }
}

/// Candidate-then-report concatenation.
pub fn combine(file: &Embedding, report: &Embedding) -> Result<Embedding> {
    if file.dim() != report.dim() {
        return Err(Error::Dimension { expected: file.dim(), got: report.dim() });
    }
    let mut values = Vec::with_capacity(2 * file.dim());
    values.extend_from_slice(&file.values);
    values.extend_from_slice(&report.values);
    Ok(Embedding {
        values,
        norm: (file.norm * file.norm + report.norm * report.norm).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    HashedTfidf,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub mode: EmbedMode,
    pub external_path: Option<PathBuf>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dim: 32,
            mode: EmbedMode::HashedTfidf,
            external_path: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Embedder {
    Hashed { dim: usize },
    External { dim: usize, table: HashMap<String, Vec<f64>> },
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder {
    pub fn from_config(cfg: &EmbedderConfig) -> Result<Embedder> {
        if cfg.dim == 0 {
            return Err(Error::Config("embedding dim must be ≥ 1".into()));
        }
        match cfg.mode {
            EmbedMode::HashedTfidf => Ok(Embedder::Hashed { dim: cfg.dim }),
            EmbedMode::External => {
                let path = cfg
                    .external_path
                    .as_deref()
                    .ok_or_else(|| Error::Config("external embeddings need external_path".into()))?;
                Embedder::load_external(path, cfg.dim)
            }
        }
    }

    pub fn load_external(path: &Path, dim: usize) -> Result<Embedder> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: HashMap<String, Vec<f64>> = serde_json::from_str(&text)?;
        if let Some((id, v)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Validation(format!(
                "embedding `{id}` has {} entries, expected {dim}",
                v.len()
            )));
        }
        if let Some((id, _)) = table.iter().find(|(_, v)| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Validation(format!("embedding `{id}` is not finite")));
        }
        Ok(Embedder::External { dim, table })
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Hashed { dim } | Embedder::External { dim, .. } => *dim,
        }
    }

    /// Embeds `text`; external mode looks the vector up by `key` instead.
    pub fn embed(&self, key: &str, text: &str) -> Result<Embedding> {
        match self {
            Embedder::Hashed { dim } => Ok(hashed(text, *dim)),
            Embedder::External { table, .. } => table
                .get(key)
                .map(|v| Embedding::new(v.clone()))
                .ok_or_else(|| Error::MissingEmbedding(key.to_string())),
        }
    }

    pub fn embed_report(&self, bug_id: &str, text: &str) -> Result<Embedding> {
        self.embed(&format!("report:{bug_id}"), text)
    }
}

/// Signed feature hashing of token counts, L2-normalized.
pub fn hashed(text: &str, dim: usize) -> Embedding {
    let mut values = vec![0.0; dim];
    for token in tokenize(text) {
        let h = fnv1a(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    Embedding::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero() {
        let e = hashed("", 32);
        assert_eq!(e.values, vec![0.0; 32]);
        assert_eq!(e.norm, 0.0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(hashed("open file handle", 32), hashed("open file handle", 32));
    }

    #[test]
    fn related_text_is_closer() {
        let q = hashed("open file handle error", 32);
        let near = hashed("file open error", 32);
        let far = hashed("quaternion rotation kernel", 32);
        assert!(q.cosine(&near) > q.cosine(&far), "{} vs {}", q.cosine(&near), q.cosine(&far));
    }

    #[test]
    fn norm_is_zero_or_one() {
        for text in ["", "x", "alpha", "alpha beta gamma", "fooBar baz_qux 123 abc"] {
            let n = hashed(text, 16).norm;
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-9, "{text}: {n}");
        }
    }

    #[test]
    fn combine_orders_file_first() {
        let a = Embedding::new(vec![1.0, 2.0]);
        let b = Embedding::new(vec![3.0, 4.0]);
        assert_eq!(combine(&a, &b).unwrap().values, [1.0, 2.0, 3.0, 4.0]);
        assert_ne!(combine(&a, &b).unwrap(), combine(&b, &a).unwrap());
        let z = Embedding::zeros(2);
        assert_eq!(combine(&z, &z).unwrap().values, [0.0; 4]);
        assert_eq!(combine(&a, &z).unwrap().values, [1.0, 2.0, 0.0, 0.0]);
        assert!(combine(&a, &Embedding::zeros(3)).is_err());
    }

    #[test]
    fn external_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        std::fs::write(&path, r#"{"u1": [1.0, 0.0], "report:b1": [0.0, 2.0]}"#).unwrap();
        let cfg = EmbedderConfig {
            dim: 2,
            mode: EmbedMode::External,
            external_path: Some(path.clone()),
        };
        let e = Embedder::from_config(&cfg).unwrap();
        assert_eq!(e.embed("u1", "ignored").unwrap().values, [1.0, 0.0]);
        assert_eq!(e.embed_report("b1", "").unwrap().norm, 2.0);
        let err = e.embed("u2", "").unwrap_err();
        assert!(err.to_string().contains("u2"));
        assert!(Embedder::load_external(&path, 3).is_err());
        let missing = EmbedderConfig { external_path: None, ..cfg };
        assert!(Embedder::from_config(&missing).is_err());
    }
}
