//! Benchmark generation: label-flipped question pairs over event triples,
//! balanced across the four structure × template categories.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{
    label_of, CausalError, DatasetKind, EventTriple, Label, Polarity, QueryKind, StructureSpec,
};
use crate::io::{self, IoError, FORMAT_VERSION};
use crate::templates::{TemplateError, TemplateFamily, TemplateSet};
use crate::triples::PooledTriple;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("category {category} needs {needed} triples but the {pool} pool has only {available} left (shortfall {shortfall})")]
    Capacity {
        category: Category,
        pool: &'static str,
        needed: usize,
        available: usize,
        shortfall: usize,
    },
    #[error("pairs_per_category must be at least 1")]
    EmptyConfig,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error("invalid benchmark: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Structure polarity × template family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    BD,
    BA,
    OD,
    OA,
}

impl Category {
    pub const ALL: [Category; 4] = [Self::BD, Self::BA, Self::OD, Self::OA];

    pub fn of(polarity: Polarity, family: TemplateFamily) -> Self {
        match (polarity, family) {
            (Polarity::Base, TemplateFamily::Default) => Self::BD,
            (Polarity::Base, TemplateFamily::Alternative) => Self::BA,
            (Polarity::Opposite, TemplateFamily::Default) => Self::OD,
            (Polarity::Opposite, TemplateFamily::Alternative) => Self::OA,
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            Self::BD | Self::BA => Polarity::Base,
            Self::OD | Self::OA => Polarity::Opposite,
        }
    }

    pub fn family(self) -> TemplateFamily {
        match self {
            Self::BD | Self::OD => TemplateFamily::Default,
            Self::BA | Self::OA => TemplateFamily::Alternative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BD => "BD",
            Self::BA => "BA",
            Self::OD => "OD",
            Self::OA => "OA",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CausalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CausalError::Unknown {
                what: "category",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionInstance {
    pub id: String,
    pub pair_id: String,
    pub triple: EventTriple,
    pub dataset_kind: DatasetKind,
    pub polarity: Polarity,
    pub template_family: TemplateFamily,
    pub query_kind: QueryKind,
    pub question_text: String,
    pub label: Label,
    pub reasoning_text: String,
    pub category: Category,
}

impl QuestionInstance {
    pub fn structure(&self) -> StructureSpec {
        StructureSpec::new(self.dataset_kind, self.polarity)
    }

    /// Renders a question and its reasoning; the label comes from the causal model.
    pub fn render(
        templates: &TemplateSet,
        pair_id: &str,
        triple: &EventTriple,
        structure: StructureSpec,
        family: TemplateFamily,
        query_kind: QueryKind,
    ) -> Result<Self, TemplateError> {
        Ok(Self {
            id: format!("{pair_id}-{}", query_kind.as_str().to_lowercase()),
            pair_id: pair_id.to_string(),
            triple: triple.clone(),
            dataset_kind: structure.dataset_kind,
            polarity: structure.polarity,
            template_family: family,
            query_kind,
            question_text: templates.render_question(
                triple,
                structure.dataset_kind,
                family,
                query_kind,
            )?,
            label: label_of(structure, query_kind),
            reasoning_text: templates.render_reasoning(structure, query_kind, triple)?,
            category: Category::of(structure.polarity, family),
        })
    }

    fn check(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Invalid(format!("question {}: {m}", self.id)));
        self.triple.validate()?;
        if self.category != Category::of(self.polarity, self.template_family) {
            return bad(format!(
                "category {} does not match {}/{}",
                self.category, self.polarity, self.template_family
            ));
        }
        let expected = label_of(self.structure(), self.query_kind);
        if self.label != expected {
            return bad(format!("label {} but structure implies {expected}", self.label));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionPair {
    pub pair_id: String,
    pub q1: QuestionInstance,
    pub q2: QuestionInstance,
}

impl QuestionPair {
    pub fn new(q1: QuestionInstance, q2: QuestionInstance) -> Result<Self, BenchError> {
        let pair = Self {
            pair_id: q1.pair_id.clone(),
            q1,
            q2,
        };
        pair.check()?;
        Ok(pair)
    }

    pub fn category(&self) -> Category {
        self.q1.category
    }

    pub fn questions(&self) -> [&QuestionInstance; 2] {
        [&self.q1, &self.q2]
    }

    fn check(&self) -> Result<(), BenchError> {
        let (a, b) = (&self.q1, &self.q2);
        let bad = |m: &str| Err(BenchError::Invalid(format!("pair {}: {m}", self.pair_id)));
        if a.query_kind != QueryKind::Q1 || b.query_kind != QueryKind::Q2 {
            return bad("members must be Q1 then Q2");
        }
        if a.pair_id != b.pair_id {
            return bad("members disagree on pair_id");
        }
        if a.triple != b.triple
            || a.dataset_kind != b.dataset_kind
            || a.polarity != b.polarity
            || a.template_family != b.template_family
        {
            return bad("members differ in triple, dataset, polarity or template family");
        }
        if a.label == b.label {
            return bad("labels do not flip");
        }
        a.check()?;
        b.check()
    }
}

/// Settings recorded alongside a generated benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchProvenance {
    pub config_hash: String,
    pub seed: u64,
    pub template_hash: String,
    /// Hash of each replacement map applied, in order.
    #[serde(default)]
    pub replacement_rounds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmark {
    pub dataset_kind: DatasetKind,
    /// Sorted by `pair_id`.
    pub pairs: Vec<QuestionPair>,
    pub provenance: BenchProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub dataset_kind: DatasetKind,
    pub pairs_per_category: usize,
    pub seed: u64,
    /// Draw base and opposite pairs from one combined pool instead of the tagged pools.
    #[serde(default)]
    pub share_pools: bool,
}

impl GenerationConfig {
    pub fn new(dataset_kind: DatasetKind, pairs_per_category: usize, seed: u64) -> Self {
        Self {
            dataset_kind,
            pairs_per_category,
            seed,
            share_pools: false,
        }
    }
}

fn sorted_pool(triples: &[PooledTriple], pool: Option<Polarity>) -> Vec<&EventTriple> {
    let mut v: Vec<&EventTriple> = triples
        .iter()
        .filter(|t| pool.is_none_or(|p| t.pool == p))
        .map(|t| &t.triple)
        .collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

/// Shuffles `pool` and hands `n` consecutive triples to each category in turn.
fn assign<'t>(
    mut pool: Vec<&'t EventTriple>,
    pool_name: &'static str,
    categories: &[Category],
    n: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(Category, &'t EventTriple)>,
) -> Result<(), BenchError> {
    pool.shuffle(rng);
    let mut cursor = 0;
    for &category in categories {
        let available = pool.len().saturating_sub(cursor);
        if available < n {
            return Err(BenchError::Capacity {
                category,
                pool: pool_name,
                needed: n,
                available,
                shortfall: n - available,
            });
        }
        out.extend(pool[cursor..cursor + n].iter().map(|t| (category, *t)));
        cursor += n;
    }
    Ok(())
}

/// Builds a balanced benchmark: `pairs_per_category` pairs in each of BD, BA,
/// OD and OA, each pair on its own triple.
pub fn generate_benchmark(
    config: &GenerationConfig,
    triples: &[PooledTriple],
    templates: &TemplateSet,
) -> Result<Benchmark, BenchError> {
    let n = config.pairs_per_category;
    if n == 0 {
        return Err(BenchError::EmptyConfig);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut assignments: Vec<(Category, &EventTriple)> = Vec::with_capacity(4 * n);
    if config.share_pools {
        let pool = sorted_pool(triples, None);
        assign(pool, "shared", &Category::ALL, n, &mut rng, &mut assignments)?;
    } else {
        let base = sorted_pool(triples, Some(Polarity::Base));
        assign(base, "base", &[Category::BD, Category::BA], n, &mut rng, &mut assignments)?;
        let opposite = sorted_pool(triples, Some(Polarity::Opposite));
        let cats = [Category::OD, Category::OA];
        assign(opposite, "opposite", &cats, n, &mut rng, &mut assignments)?;
    }

    let mut pairs = Vec::with_capacity(4 * n);
    let mut index: BTreeMap<Category, usize> = BTreeMap::new();
    for (category, triple) in assignments {
        let i = index.entry(category).or_default();
        let pair_id = format!("{}-{}-{:05}", config.dataset_kind, category, *i);
        *i += 1;
        let structure = StructureSpec::new(config.dataset_kind, category.polarity());
        let render = |q| {
            QuestionInstance::render(templates, &pair_id, triple, structure, category.family(), q)
        };
        pairs.push(QuestionPair::new(render(QueryKind::Q1)?, render(QueryKind::Q2)?)?);
    }
    pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let mut hashed_triples: Vec<(&str, &EventTriple)> =
        triples.iter().map(|t| (t.pool.as_str(), &t.triple)).collect();
    hashed_triples.sort_by(|a, b| a.1.id.cmp(&b.1.id));
    let template_hash = templates.content_hash();
    let config_hash = io::json_hash(&(config, &hashed_triples, &template_hash));

    let bench = Benchmark {
        dataset_kind: config.dataset_kind,
        pairs,
        provenance: BenchProvenance {
            config_hash,
            seed: config.seed,
            template_hash,
            replacement_rounds: Vec::new(),
        },
    };
    debug_assert!(bench.category_counts().values().all(|&c| c == n));
    Ok(bench)
}

/// Tag distinguishing benchmark, train and test records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    None,
    Train,
    Test,
}

/// On-disk form of a question: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub format_version: u32,
    pub split: SplitTag,
    pub id: String,
    pub pair_id: String,
    pub triple_id: String,
    pub x: String,
    pub y: String,
    pub z: String,
    pub dataset_kind: DatasetKind,
    pub polarity: Polarity,
    pub template_family: TemplateFamily,
    pub query_kind: QueryKind,
    pub category: Category,
    pub question_text: String,
    pub reasoning_text: String,
    pub label: Label,
}

impl QuestionRecord {
    pub fn from_question(q: &QuestionInstance, split: SplitTag) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            split,
            id: q.id.clone(),
            pair_id: q.pair_id.clone(),
            triple_id: q.triple.id.clone(),
            x: q.triple.x.clone(),
            y: q.triple.y.clone(),
            z: q.triple.z.clone(),
            dataset_kind: q.dataset_kind,
            polarity: q.polarity,
            template_family: q.template_family,
            query_kind: q.query_kind,
            category: q.category,
            question_text: q.question_text.clone(),
            reasoning_text: q.reasoning_text.clone(),
            label: q.label,
        }
    }

    pub fn into_question(self) -> Result<QuestionInstance, BenchError> {
        let q = QuestionInstance {
            triple: EventTriple {
                id: self.triple_id,
                x: self.x,
                y: self.y,
                z: self.z,
            },
            id: self.id,
            pair_id: self.pair_id,
            dataset_kind: self.dataset_kind,
            polarity: self.polarity,
            template_family: self.template_family,
            query_kind: self.query_kind,
            question_text: self.question_text,
            label: self.label,
            reasoning_text: self.reasoning_text,
            category: self.category,
        };
        q.check()?;
        Ok(q)
    }
}

impl Benchmark {
    pub fn questions(&self) -> impl Iterator<Item = &QuestionInstance> {
        self.pairs.iter().flat_map(|p| [&p.q1, &p.q2])
    }

    pub fn len_questions(&self) -> usize {
        self.pairs.len() * 2
    }

    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut counts: BTreeMap<Category, usize> =
            Category::ALL.into_iter().map(|c| (c, 0)).collect();
        for p in &self.pairs {
            *counts.entry(p.category()).or_default() += 1;
        }
        counts
    }

    pub fn question_index(&self) -> HashMap<&str, &QuestionInstance> {
        self.questions().map(|q| (q.id.as_str(), q)).collect()
    }

    /// Records sorted by question id.
    pub fn records(&self) -> Vec<QuestionRecord> {
        let mut recs: Vec<QuestionRecord> = self
            .questions()
            .map(|q| QuestionRecord::from_question(q, SplitTag::None))
            .collect();
        recs.sort_by(|a, b| a.id.cmp(&b.id));
        recs
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        io::to_jsonl(self.records())
    }

    /// Reassembles and validates a benchmark from question records.
    pub fn from_records(
        records: Vec<QuestionRecord>,
        provenance: BenchProvenance,
    ) -> Result<Self, BenchError> {
        let mut halves: BTreeMap<String, (Option<QuestionInstance>, Option<QuestionInstance>)> =
            BTreeMap::new();
        let mut kind = None;
        for rec in records {
            let q = rec.into_question()?;
            match kind {
                None => kind = Some(q.dataset_kind),
                Some(k) if k != q.dataset_kind => {
                    return Err(BenchError::Invalid(format!(
                        "mixed dataset kinds {k} and {}",
                        q.dataset_kind
                    )))
                }
                _ => {}
            }
            let slot = halves.entry(q.pair_id.clone()).or_default();
            let target = match q.query_kind {
                QueryKind::Q1 => &mut slot.0,
                QueryKind::Q2 => &mut slot.1,
            };
            if target.is_some() {
                return Err(BenchError::Invalid(format!("duplicate question {}", q.id)));
            }
            *target = Some(q);
        }
        let dataset_kind =
            kind.ok_or_else(|| BenchError::Invalid("benchmark has no questions".into()))?;
        let mut pairs = Vec::with_capacity(halves.len());
        for (pair_id, halves) in halves {
            match halves {
                (Some(q1), Some(q2)) => pairs.push(QuestionPair::new(q1, q2)?),
                _ => return Err(BenchError::Invalid(format!("pair {pair_id} is incomplete"))),
            }
        }
        let bench = Self {
            dataset_kind,
            pairs,
            provenance,
        };
        bench.check_balance()?;
        Ok(bench)
    }

    pub fn check_balance(&self) -> Result<(), BenchError> {
        let counts = self.category_counts();
        let first = counts[&Category::BD];
        if counts.values().any(|&c| c != first) {
            return Err(BenchError::Invalid(format!(
                "unbalanced categories {:?}",
                counts
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), BenchError> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| IoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn read(path: &Path, provenance: BenchProvenance) -> Result<Self, BenchError> {
        Self::from_records(io::read_jsonl(path)?, provenance)
    }
}
