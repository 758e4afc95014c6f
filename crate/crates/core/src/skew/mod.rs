//! Skew audits that look for label shortcuts a benchmark could still carry:
//! event phrases concentrated in one category, and questions that sit in an
//! unusually large number of nearest-neighbour lists.

mod count;
pub mod embed;
mod neighbor;
mod replace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchError, Category};
use crate::io::IoError;
use crate::num::Scalar;
use crate::provider::ProviderError;

pub use count::count_skew;
pub use embed::{
    embed_questions, EmbedInput, EmbedOutput, EmbeddingCache, EmbeddingProvider, EmbeddingTable,
    HashingEmbedder, HttpEmbeddingProvider, ProcessEmbeddingProvider,
};
pub use neighbor::{neighbor_lists, neighbor_skew, neighbor_skew_ids, DEFAULT_K};
pub use replace::{apply_replacements, ReplacementMap, ReplacementRule};

/// Default maximum category share before a phrase is flagged.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

/// Number of offenders replaced per audit round.
pub const REPAIR_BATCH: usize = 5;

#[derive(Debug, Error)]
pub enum SkewError {
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no embedding for question {0}")]
    Coverage(String),
    #[error("embedding table: {0}")]
    Table(String),
    #[error("replacement for {phrase:?} in triple {triple_id}: {reason}")]
    Collision {
        triple_id: String,
        phrase: String,
        reason: String,
    },
    #[error("replacement map: {0}")]
    Map(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewKind {
    CountBased,
    SimilarityBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Offender<S: Scalar> {
    /// Event phrase (count audit) or question id (similarity audit).
    pub item: String,
    pub score: S,
    /// Occurrences of the phrase, or neighbour-list appearances.
    pub occurrences: usize,
    pub affected_categories: Vec<Category>,
    /// `"<label>/<category>"` → count, for count audits.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distribution: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SkewReport<S: Scalar> {
    pub kind: SkewKind,
    /// Sorted by descending score.
    pub offenders: Vec<Offender<S>>,
    pub threshold_used: Option<S>,
    pub k: Option<usize>,
    /// Stamped by the caller when the report is written; audits are pure.
    pub generated_at: Option<String>,
}

impl<S: Scalar> SkewReport<S> {
    pub fn max_score(&self) -> Option<S> {
        self.offenders.first().map(|o| o.score)
    }

    pub fn top(&self, n: usize) -> &[Offender<S>] {
        &self.offenders[..n.min(self.offenders.len())]
    }
}
