//! Question embeddings: the table consumed by the similarity audit, the
//! providers that fill it, and an on-disk cache keyed by text hash.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use crate::bench::QuestionInstance;
use crate::io::{self, io_err, IoError};
use crate::num::Scalar;
use crate::provider::{post_json, with_retry, ProcessCommand, ProviderError, RetryPolicy};

use super::SkewError;

/// Default number of embedding requests in flight.
pub const DEFAULT_CONCURRENCY: usize = 8;

/// Texts sent per embedding request.
pub const BATCH_SIZE: usize = 16;

/// Question id → vector, all of one dimension and all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<S: Scalar> {
    pub provider: String,
    dim: Option<usize>,
    vectors: BTreeMap<String, Vec<S>>,
}

/// One line of an embeddings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub vector: Vec<f64>,
}

impl<S: Scalar> EmbeddingTable<S> {
    pub fn new(provider: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            dim: None,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: String, vector: Vec<S>) -> Result<(), SkewError> {
        if vector.is_empty() {
            return Err(SkewError::Table(format!("{id}: empty vector")));
        }
        if let Some(d) = self.dim {
            if vector.len() != d {
                return Err(SkewError::Table(format!(
                    "{id}: dimension {} differs from {d}",
                    vector.len()
                )));
            }
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(SkewError::Table(format!("{id}: non-finite component")));
        }
        self.dim = Some(vector.len());
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[S]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = EmbeddingRow> + '_ {
        self.vectors.iter().map(|(id, v)| EmbeddingRow {
            id: id.clone(),
            vector: v.iter().map(|x| x.to_f64_lossy()).collect(),
        })
    }

    pub fn from_rows(
        provider: impl Into<String>,
        rows: impl IntoIterator<Item = EmbeddingRow>,
    ) -> Result<Self, SkewError> {
        let mut t = Self::new(provider);
        for r in rows {
            let v = r.vector.into_iter().map(S::from_f64_lossy).collect();
            t.insert(r.id, v)?;
        }
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<(), SkewError> {
        Ok(io::write_jsonl(path, self.rows())?)
    }

    pub fn read(path: &Path) -> Result<Self, SkewError> {
        let rows: Vec<EmbeddingRow> = io::read_jsonl(path)?;
        Self::from_rows(path.display().to_string(), rows)
    }
}

/// One request item; a request body is a JSON array of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedInput {
    pub id: String,
    pub text: String,
}

/// One response item; a response body is a JSON array of these, in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedOutput {
    pub id: String,
    pub vector: Vec<f64>,
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    /// Identifier stored with cached vectors.
    fn name(&self) -> String;

    async fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<EmbedOutput>, ProviderError>;
}

/// Orders a response to match the request, rejecting missing or extra ids.
fn match_response(
    inputs: &[EmbedInput],
    outputs: Vec<EmbedOutput>,
) -> Result<Vec<Vec<f64>>, ProviderError> {
    if outputs.len() != inputs.len() {
        return Err(ProviderError::Rejected(format!(
            "{} vectors for {} inputs",
            outputs.len(),
            inputs.len()
        )));
    }
    let mut by_id: HashMap<String, Vec<f64>> =
        outputs.into_iter().map(|o| (o.id, o.vector)).collect();
    inputs
        .iter()
        .map(|i| {
            by_id
                .remove(&i.id)
                .ok_or_else(|| ProviderError::Rejected(format!("no vector for {}", i.id)))
        })
        .collect()
}

/// Offline embedder: signed feature hashing of lowercase word tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl HashingEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        use sha2::{Digest, Sha256};
        let mut v = vec![0.0; self.dim.max(1)];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = Sha256::digest(token.to_lowercase().as_bytes());
            let bucket = u64::from_le_bytes(h[..8].try_into().unwrap()) as usize % v.len();
            v[bucket] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        v
    }
}

#[async_trait]
impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> String {
        format!("hashing-{}", self.dim)
    }

    async fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<EmbedOutput>, ProviderError> {
        Ok(inputs
            .iter()
            .map(|i| EmbedOutput {
                id: i.id.clone(),
                vector: self.embed_one(&i.text),
            })
            .collect())
    }
}

/// Embeddings over HTTP: POSTs a JSON array of [`EmbedInput`], expects a
/// JSON array of [`EmbedOutput`].
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    pub url: String,
    pub api_key: Option<String>,
    client: reqwest::Client,
}

impl HttpEmbeddingProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            url: url.into(),
            api_key,
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl EmbeddingProvider for HttpEmbeddingProvider {
    fn name(&self) -> String {
        self.url.clone()
    }

    async fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<EmbedOutput>, ProviderError> {
        post_json(&self.client, &self.url, self.api_key.as_deref(), inputs).await
    }
}

/// Embeddings from a local command speaking the same JSON on stdin/stdout.
#[derive(Debug, Clone)]
pub struct ProcessEmbeddingProvider {
    pub command: ProcessCommand,
}

#[async_trait]
impl EmbeddingProvider for ProcessEmbeddingProvider {
    fn name(&self) -> String {
        format!("process:{}", self.command.program.display())
    }

    async fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<EmbedOutput>, ProviderError> {
        self.command.call(inputs).await
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    text_hash: String,
    provider: String,
    vector: Vec<f64>,
}

/// Append-only JSONL cache of vectors keyed by (provider, text hash).
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: HashMap<(String, String), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, loading any entries already present.
    pub fn open(path: &Path) -> Result<Self, IoError> {
        let mut entries = HashMap::new();
        if path.exists() {
            for e in io::read_jsonl::<CacheEntry>(path)? {
                entries.insert((e.provider, e.text_hash), e.vector);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: None,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, provider: &str, text: &str) -> Option<&[f64]> {
        self.entries
            .get(&(provider.to_string(), io::sha256_hex(text.as_bytes())))
            .map(Vec::as_slice)
    }

    pub fn put(&mut self, provider: &str, text: &str, vector: Vec<f64>) -> Result<(), IoError> {
        let entry = CacheEntry {
            text_hash: io::sha256_hex(text.as_bytes()),
            provider: provider.to_string(),
            vector,
        };
        if let Some(path) = &self.path {
            if self.file.is_none() {
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(io_err(path))?;
                self.file = Some(f);
            }
            io::append_jsonl(self.file.as_mut().unwrap(), &entry).map_err(io_err(path))?;
        }
        self.entries
            .insert((entry.provider, entry.text_hash), entry.vector);
        Ok(())
    }
}

/// Embeds each question's text, consulting and filling `cache`. Requests
/// go out in batches with at most `concurrency` in flight, each under the
/// retry policy.
pub async fn embed_questions<S: Scalar>(
    questions: &[&QuestionInstance],
    provider: &dyn EmbeddingProvider,
    cache: &mut EmbeddingCache,
    policy: &RetryPolicy,
    concurrency: usize,
) -> Result<EmbeddingTable<S>, SkewError> {
    let name = provider.name();
    // One input per distinct uncached text, named by its first question.
    let mut missing: BTreeMap<&str, &str> = BTreeMap::new();
    for q in questions {
        if cache.get(&name, &q.question_text).is_none() {
            missing.entry(q.question_text.as_str()).or_insert(q.id.as_str());
        }
    }
    let mut inputs: Vec<EmbedInput> = missing
        .into_iter()
        .map(|(text, id)| EmbedInput {
            id: id.to_string(),
            text: text.to_string(),
        })
        .collect();
    inputs.sort_by(|a, b| a.id.cmp(&b.id));

    let batches: Vec<&[EmbedInput]> = inputs.chunks(BATCH_SIZE).collect();
    let results: Vec<(&[EmbedInput], Vec<Vec<f64>>)> = stream::iter(batches)
        .map(|batch| async move {
            let outputs = with_retry(policy, || provider.embed(batch)).await?;
            Ok::<_, ProviderError>((batch, match_response(batch, outputs)?))
        })
        .buffer_unordered(concurrency.max(1))
        .try_collect()
        .await?;
    for (batch, vectors) in results {
        for (input, v) in batch.iter().zip(vectors) {
            cache.put(&name, &input.text, v)?;
        }
    }

    let mut table = EmbeddingTable::new(name.clone());
    for q in questions {
        let v = cache.get(&name, &q.question_text).expect("embedded above");
        table.insert(q.id.clone(), v.iter().copied().map(S::from_f64_lossy).collect())?;
    }
    Ok(table)
}
