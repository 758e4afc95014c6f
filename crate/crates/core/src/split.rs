//! Pairwise train/test split: one member of every pair goes to train, the
//! other to test, with Q1/Q2 exactly balanced inside each category.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bench::{
    Benchmark, BenchError, Category, QuestionInstance, QuestionPair, QuestionRecord, SplitTag,
};
use crate::causal::QueryKind;
use crate::io::{self, IoError};

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("category {category} has {pairs} pairs; an even count is required for exact Q1/Q2 balance")]
    Balance { category: Category, pairs: usize },
    #[error("{path}: expected {expected:?} records, found {found:?} (question {id})")]
    WrongTag {
        path: String,
        expected: SplitTag,
        found: SplitTag,
        id: String,
    },
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    /// Sorted by question id.
    pub train: Vec<QuestionInstance>,
    /// Sorted by question id.
    pub test: Vec<QuestionInstance>,
    pub seed: u64,
}

pub fn pairwise_split(benchmark: &Benchmark, seed: u64) -> Result<DatasetSplit, SplitError> {
    let mut by_cat: BTreeMap<Category, Vec<&QuestionPair>> = BTreeMap::new();
    for p in &benchmark.pairs {
        by_cat.entry(p.category()).or_default().push(p);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(benchmark.pairs.len());
    let mut test = Vec::with_capacity(benchmark.pairs.len());
    for category in Category::ALL {
        let Some(pairs) = by_cat.get_mut(&category) else {
            continue;
        };
        if pairs.len() % 2 != 0 {
            return Err(SplitError::Balance {
                category,
                pairs: pairs.len(),
            });
        }
        pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        pairs.shuffle(&mut rng);
        for (i, p) in pairs.iter().enumerate() {
            let (to_train, to_test) = if i % 2 == 0 { (&p.q1, &p.q2) } else { (&p.q2, &p.q1) };
            train.push(to_train.clone());
            test.push(to_test.clone());
        }
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    test.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(DatasetSplit { train, test, seed })
}

impl DatasetSplit {
    pub fn train_jsonl(&self) -> Vec<u8> {
        io::to_jsonl(self.train.iter().map(|q| QuestionRecord::from_question(q, SplitTag::Train)))
    }

    pub fn test_jsonl(&self) -> Vec<u8> {
        io::to_jsonl(self.test.iter().map(|q| QuestionRecord::from_question(q, SplitTag::Test)))
    }

    pub fn count_kind(questions: &[QuestionInstance], kind: QueryKind) -> usize {
        questions.iter().filter(|q| q.query_kind == kind).count()
    }

    /// Checks the partition and balance invariants.
    pub fn verify(&self) -> Result<(), String> {
        let mut seen: HashMap<&str, (&QuestionInstance, usize)> = HashMap::new();
        for q in &self.train {
            if seen.insert(q.pair_id.as_str(), (q, 1)).is_some() {
                return Err(format!("pair {} has two train members", q.pair_id));
            }
        }
        for q in &self.test {
            match seen.get_mut(q.pair_id.as_str()) {
                Some((t, n)) if *n == 1 => {
                    if t.label == q.label || t.query_kind == q.query_kind {
                        return Err(format!("pair {} members do not flip", q.pair_id));
                    }
                    *n = 2;
                }
                _ => return Err(format!("test question {} has no train partner", q.id)),
            }
        }
        if let Some((q, _)) = seen.values().find(|(_, n)| *n != 2) {
            return Err(format!("pair {} has no test member", q.pair_id));
        }
        for part in [&self.train, &self.test] {
            if Self::count_kind(part, QueryKind::Q1) != Self::count_kind(part, QueryKind::Q2) {
                return Err("Q1/Q2 counts differ".into());
            }
        }
        Ok(())
    }
}

/// Reads question records carrying the expected split tag.
pub fn read_split_file(path: &Path, expected: SplitTag) -> Result<Vec<QuestionInstance>, SplitError> {
    let records: Vec<QuestionRecord> = io::read_jsonl(path)?;
    records
        .into_iter()
        .map(|r| {
            if r.split != expected {
                return Err(SplitError::WrongTag {
                    path: path.display().to_string(),
                    expected,
                    found: r.split,
                    id: r.id,
                });
            }
            Ok(r.into_question()?)
        })
        .collect()
}
