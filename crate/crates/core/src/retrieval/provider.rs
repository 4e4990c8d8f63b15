//! Embedding and completion providers.
//!
//! The HTTP providers speak a minimal JSON protocol:
//! `POST {endpoint}/embed {"texts": [...]}` -> `{"vectors": [[...]]}` and
//! `POST {endpoint}/complete {"prompt", "max_tokens"}` -> `{"text"}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("provider error: {0}")]
pub struct ProviderError(pub String);

pub trait EmbeddingProvider: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<String, ProviderError>;
}

pub const HASHING_DIMENSION: usize = 256;

/// Deterministic offline embedder: lowercased tokens (surrounding punctuation
/// trimmed) are hashed with 64-bit FNV-1a into 256 count buckets, then the
/// vector is unit-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashingEmbedder;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashingEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; HASHING_DIMENSION];
        for raw in text.split_whitespace() {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            let token = if trimmed.is_empty() { lower.as_str() } else { trimmed };
            v[(fnv1a(token.as_bytes()) % HASHING_DIMENSION as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(timeout).build().expect("static client configuration")
}

fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    url: &str,
    body: &B,
) -> Result<R, ProviderError> {
    let resp = client.post(url).json(body).send().map_err(|e| ProviderError(format!("{url}: {e}")))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(ProviderError(format!("{url}: HTTP {}", status.as_u16())));
    }
    resp.json().map_err(|e| ProviderError(format!("{url}: bad reply: {e}")))
}

pub struct HttpEmbedder {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        HttpEmbedder { endpoint: endpoint.trim_end_matches('/').to_string(), client: client(timeout) }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let reply: EmbedReply = post_json(&self.client, &format!("{}/embed", self.endpoint), &EmbedRequest { texts })?;
        if reply.vectors.len() != texts.len() {
            return Err(ProviderError(format!("asked for {} embeddings, got {}", texts.len(), reply.vectors.len())));
        }
        Ok(reply.vectors)
    }
}

pub struct HttpCompleter {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpCompleter {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        HttpCompleter { endpoint: endpoint.trim_end_matches('/').to_string(), client: client(timeout) }
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct CompleteReply {
    text: String,
}

impl CompletionProvider for HttpCompleter {
    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<String, ProviderError> {
        let reply: CompleteReply =
            post_json(&self.client, &format!("{}/complete", self.endpoint), &CompleteRequest { prompt, max_tokens })?;
        Ok(reply.text)
    }
}
