//! Text embedding backends for the heading-structure metric.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rouge::tokenize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("backend returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("a heading set needs at least one heading")]
    EmptyHeadings,
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;

    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

pub const HASHED_BOW: &str = "hashed-bow";

/// Offline reference embedder: token counts hashed into a fixed number of
/// buckets, then L2-normalized. Headings with no tokens are hashed whole so
/// every vector has unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBowEmbedder {
    pub buckets: usize,
    pub seed: u64,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self {
            buckets: 512,
            seed: 0x5eed_2024,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

impl HashedBowEmbedder {
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(self.seed, token.as_bytes()) % self.buckets as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.buckets];
        let tokens = tokenize(text).tokens;
        if tokens.is_empty() {
            v[self.bucket(text.trim())] = 1.0;
            return v;
        }
        for t in &tokens {
            v[self.bucket(t)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl Embedder for HashedBowEmbedder {
    fn name(&self) -> &str {
        HASHED_BOW
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint (e.g. a server hosting
/// bge-large-en-v1.5).
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into(),
            model: model.into(),
            api_key,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let mut request = self.client.post(url).json(&EmbedRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(EmbedError::Transport(format!("HTTP {status}: {body}")));
        }
        let mut parsed: EmbedResponse = response
            .json()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                found: parsed.data.len(),
            });
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_headings_identical_vectors() {
        let e = HashedBowEmbedder::default();
        assert_eq!(e.embed_one("Deep Learning"), e.embed_one("deep  learning!"));
    }

    #[test]
    fn vectors_are_unit_norm() {
        let e = HashedBowEmbedder::default();
        for text in ["Introduction", "A b a b c", "", "—", "1.1 Background and Scope"] {
            let v = e.embed_one(text);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{text}: {norm}");
        }
    }

    #[test]
    fn hash_is_stable() {
        // pinned so reports stay comparable across builds
        assert_eq!(fnv1a(0, b""), FNV_OFFSET);
        assert_eq!(fnv1a(0, b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
