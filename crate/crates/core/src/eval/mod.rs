//! Evaluation: question-only prompts, strict answer parsing, accuracy
//! metrics with exact counts, and clean-versus-noisy degradation.

mod inference;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{Category, QuestionInstance};
use crate::causal::{DatasetKind, Label, QueryKind};
use crate::export::NoisyPrefixSpec;
use crate::io::{IoError, FORMAT_VERSION};
use crate::num::{ratio_to_scalar, signed_ratio_to_scalar, Ratio, Scalar, SignedRatio};

pub use inference::{
    run_eval, DecodeParams, EvalOptions, GoldEcho, HttpInferenceProvider, InferenceProvider,
    InferenceRequest, InferenceResponse, PairedLabel, ProcessInferenceProvider,
};

/// Format instruction placed before every question.
pub const DEFAULT_INSTRUCTION: &str = "Answer the causal question below. You may reason \
step by step, but the last line of your reply must be exactly one word: Yes or No.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to score")]
    Empty,
    #[error("record for unknown question {0}")]
    Join(String),
    #[error("record {id}: {reason}")]
    Mismatch { id: String, reason: String },
    #[error("populations differ; only in clean: {only_clean:?}; only in noisy: {only_noisy:?}")]
    Population {
        only_clean: Vec<String>,
        only_noisy: Vec<String>,
    },
    #[error("duplicate record for question {0}")]
    Duplicate(String),
    #[error("no questions to evaluate")]
    NoQuestions,
    #[error("provider unavailable after retries ({reason}); {completed} answered, {remaining} remaining{}", checkpoint.as_ref().map(|p| format!("; resume from {p}")).unwrap_or_default())]
    Aborted {
        reason: String,
        completed: usize,
        remaining: usize,
        checkpoint: Option<String>,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clean,
    Noisy,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::Noisy => "noisy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub instruction: String,
    /// Appended after the question under the noisy condition.
    pub noisy_prefix: NoisyPrefixSpec,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            noisy_prefix: NoisyPrefixSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPrompt {
    pub question_id: String,
    pub text: String,
    pub condition: Condition,
}

/// `instruction \n question`, plus `\n prefix` under the noisy condition so
/// the distractor sits right where the model starts reasoning.
pub fn build_prompt(q: &QuestionInstance, condition: Condition, config: &PromptConfig) -> EvalPrompt {
    let mut text = format!("{}\n{}", config.instruction, q.question_text);
    if condition == Condition::Noisy && !config.noisy_prefix.prefix_text.is_empty() {
        text.push('\n');
        text.push_str(&config.noisy_prefix.prefix_text);
    }
    EvalPrompt {
        question_id: q.id.clone(),
        text,
        condition,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parsed {
    Yes,
    No,
    Invalid,
}

impl Parsed {
    pub fn label(self) -> Option<Label> {
        match self {
            Self::Yes => Some(Label::Yes),
            Self::No => Some(Label::No),
            Self::Invalid => None,
        }
    }
}

/// Strict: the last non-empty line, trimmed, must be exactly `Yes` or `No`.
pub fn parse_answer(completion: &str) -> Parsed {
    match completion.trim().lines().last().map(str::trim) {
        Some("Yes") => Parsed::Yes,
        Some("No") => Parsed::No,
        _ => Parsed::Invalid,
    }
}

/// Lenient: also accepts case variants and surrounding punctuation on the
/// last line (`yes.`, `**No**`). Not used for reported numbers.
pub fn parse_answer_lenient(completion: &str) -> Parsed {
    let last = completion.trim().lines().last().unwrap_or("");
    let word = last.trim_matches(|c: char| !c.is_alphanumeric());
    if word.eq_ignore_ascii_case("yes") {
        Parsed::Yes
    } else if word.eq_ignore_ascii_case("no") {
        Parsed::No
    } else {
        Parsed::Invalid
    }
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub format_version: u32,
    pub question_id: String,
    pub raw_completion: String,
    pub parsed: Parsed,
    pub gold: Label,
    pub correct: bool,
    pub dataset_kind: DatasetKind,
    pub category: Category,
    pub query_kind: QueryKind,
    pub condition: Condition,
    /// Free-form tag of the model or fine-tuning strategy being evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    /// Set when the provider failed for this question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn new(
        q: &QuestionInstance,
        condition: Condition,
        strategy: Option<String>,
        raw_completion: String,
        parsed: Parsed,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            question_id: q.id.clone(),
            raw_completion,
            parsed,
            gold: q.label,
            correct: parsed.label() == Some(q.label),
            dataset_kind: q.dataset_kind,
            category: q.category,
            query_kind: q.query_kind,
            condition,
            strategy,
            error: None,
        }
    }

    pub fn failed(
        q: &QuestionInstance,
        condition: Condition,
        strategy: Option<String>,
        error: String,
    ) -> Self {
        Self {
            error: Some(error),
            ..Self::new(q, condition, strategy, String::new(), Parsed::Invalid)
        }
    }

    fn consistent(&self) -> bool {
        self.correct == (self.parsed.label() == Some(self.gold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GroupMetrics<S: Scalar> {
    pub correct: u64,
    pub valid: u64,
    pub total: u64,
    pub accuracy: S,
}

impl<S: Scalar> GroupMetrics<S> {
    fn tally(records: &[&EvalRecord]) -> Self {
        let correct = records.iter().filter(|r| r.correct).count() as u64;
        let valid = records.iter().filter(|r| r.parsed != Parsed::Invalid).count() as u64;
        let total = records.len() as u64;
        Self {
            correct,
            valid,
            total,
            accuracy: ratio_to_scalar(Ratio::new(correct, total.max(1))),
        }
    }

    /// Exact `correct / total`.
    pub fn accuracy_ratio(&self) -> Ratio {
        Ratio::new(self.correct, self.total.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Metrics<S: Scalar> {
    #[serde(flatten)]
    pub overall: GroupMetrics<S>,
    pub per_category: BTreeMap<Category, GroupMetrics<S>>,
    pub per_query_kind: BTreeMap<QueryKind, GroupMetrics<S>>,
}

impl<S: Scalar> Metrics<S> {
    pub fn accuracy(&self) -> S {
        self.overall.accuracy
    }

    pub fn accuracy_ratio(&self) -> Ratio {
        self.overall.accuracy_ratio()
    }
}

fn check_unique(records: &[EvalRecord]) -> Result<(), EvalError> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.question_id.as_str()) {
            return Err(EvalError::Duplicate(r.question_id.clone()));
        }
        if !r.consistent() {
            return Err(EvalError::Mismatch {
                id: r.question_id.clone(),
                reason: "correct flag disagrees with parsed and gold".into(),
            });
        }
    }
    Ok(())
}

/// Accuracy with Invalid counted as incorrect, plus validity and breakdowns.
pub fn score<S: Scalar>(records: &[EvalRecord]) -> Result<Metrics<S>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    check_unique(records)?;
    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut by_cat: BTreeMap<Category, Vec<&EvalRecord>> = BTreeMap::new();
    let mut by_kind: BTreeMap<QueryKind, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_cat.entry(r.category).or_default().push(r);
        by_kind.entry(r.query_kind).or_default().push(r);
    }
    Ok(Metrics {
        overall: GroupMetrics::tally(&all),
        per_category: by_cat.iter().map(|(k, v)| (*k, GroupMetrics::tally(v))).collect(),
        per_query_kind: by_kind.iter().map(|(k, v)| (*k, GroupMetrics::tally(v))).collect(),
    })
}

/// Scores after checking each record against the benchmark questions.
pub fn score_against<S: Scalar>(
    records: &[EvalRecord],
    questions: &HashMap<&str, &QuestionInstance>,
) -> Result<Metrics<S>, EvalError> {
    for r in records {
        let q = questions
            .get(r.question_id.as_str())
            .ok_or_else(|| EvalError::Join(r.question_id.clone()))?;
        if (q.label, q.category, q.query_kind, q.dataset_kind)
            != (r.gold, r.category, r.query_kind, r.dataset_kind)
        {
            return Err(EvalError::Mismatch {
                id: r.question_id.clone(),
                reason: "metadata disagrees with the benchmark".into(),
            });
        }
    }
    score(records)
}

/// Exact `clean − noisy` accuracy difference; negative when noisy is better.
pub fn accuracy_delta<S: Scalar>(clean: &Metrics<S>, noisy: &Metrics<S>) -> SignedRatio {
    let signed = |r: Ratio| SignedRatio::new(*r.numer() as i64, *r.denom() as i64);
    signed(clean.accuracy_ratio()) - signed(noisy.accuracy_ratio())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DegradationRow<S: Scalar> {
    pub strategy: String,
    pub dataset_kind: DatasetKind,
    pub clean: GroupMetrics<S>,
    pub noisy: GroupMetrics<S>,
    pub delta: S,
    /// `numerator/denominator` of the exact delta.
    pub delta_exact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DegradationReport<S: Scalar> {
    pub rows: Vec<DegradationRow<S>>,
    /// Mean delta across datasets, per strategy.
    pub mean_delta_by_strategy: BTreeMap<String, S>,
}

type Groups<'a> = BTreeMap<(String, DatasetKind), Vec<&'a EvalRecord>>;

fn group_by_run(records: &[EvalRecord]) -> Groups<'_> {
    let mut g = Groups::new();
    for r in records {
        let s = r.strategy.clone().unwrap_or_else(|| "-".into());
        g.entry((s, r.dataset_kind)).or_default().push(r);
    }
    g
}

fn exact_string(r: SignedRatio) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Per (strategy, dataset) accuracy drop between a clean and a noisy run
/// over the same questions.
pub fn degradation<S: Scalar>(
    clean: &[EvalRecord],
    noisy: &[EvalRecord],
) -> Result<DegradationReport<S>, EvalError> {
    check_unique(clean)?;
    check_unique(noisy)?;
    let key = |r: &EvalRecord| (r.strategy.clone().unwrap_or_else(|| "-".into()), r.question_id.clone());
    let ids_c: BTreeSet<_> = clean.iter().map(key).collect();
    let ids_n: BTreeSet<_> = noisy.iter().map(key).collect();
    if ids_c != ids_n {
        let fmt = |s: BTreeSet<&(String, String)>| s.into_iter().map(|(_, id)| id.clone()).collect();
        return Err(EvalError::Population {
            only_clean: fmt(ids_c.difference(&ids_n).collect()),
            only_noisy: fmt(ids_n.difference(&ids_c).collect()),
        });
    }
    if clean.is_empty() {
        return Err(EvalError::Empty);
    }

    let gc = group_by_run(clean);
    let gn = group_by_run(noisy);

    let mut rows = Vec::new();
    let mut sums: BTreeMap<String, (SignedRatio, usize)> = BTreeMap::new();
    for ((strategy, kind), rc) in &gc {
        let c = GroupMetrics::<S>::tally(rc);
        let n = GroupMetrics::<S>::tally(&gn[&(strategy.clone(), *kind)]);
        let signed = |r: Ratio| SignedRatio::new(*r.numer() as i64, *r.denom() as i64);
        let d = signed(c.accuracy_ratio()) - signed(n.accuracy_ratio());
        let e = sums.entry(strategy.clone()).or_insert((SignedRatio::from_integer(0), 0));
        e.0 += d;
        e.1 += 1;
        rows.push(DegradationRow {
            strategy: strategy.clone(),
            dataset_kind: *kind,
            clean: c,
            noisy: n,
            delta: signed_ratio_to_scalar(d),
            delta_exact: exact_string(d),
        });
    }
    let mean_delta_by_strategy = sums
        .into_iter()
        .map(|(s, (sum, n))| (s, signed_ratio_to_scalar(sum / SignedRatio::from_integer(n as i64))))
        .collect();
    Ok(DegradationReport {
        rows,
        mean_delta_by_strategy,
    })
}

impl<S: Scalar> DegradationReport<S> {
    /// Plain-text comparison table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<11} {:>14} {:>14} {:>8}",
            "strategy", "dataset", "clean", "noisy", "delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:<11} {:>5.3} {:>8} {:>5.3} {:>8} {:>8.3}",
                r.strategy,
                r.dataset_kind.as_str(),
                r.clean.accuracy.to_f64_lossy(),
                format!("{}/{}", r.clean.correct, r.clean.total),
                r.noisy.accuracy.to_f64_lossy(),
                format!("{}/{}", r.noisy.correct, r.noisy.total),
                r.delta.to_f64_lossy(),
            );
        }
        for (s, d) in &self.mean_delta_by_strategy {
            let _ = writeln!(out, "mean delta {s}: {:.3}", d.to_f64_lossy());
        }
        out
    }
}

impl<S: Scalar> Metrics<S> {
    /// Plain-text summary with per-category and per-query breakdowns.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, name: &str, g: &GroupMetrics<S>| {
            let _ = writeln!(
                out,
                "{:<8} {:>6.3} {:>10} {:>10}",
                name,
                g.accuracy.to_f64_lossy(),
                format!("{}/{}", g.correct, g.total),
                format!("{}/{}", g.valid, g.total),
            );
        };
        let _ = writeln!(out, "{:<8} {:>6} {:>10} {:>10}", "group", "acc", "correct", "valid");
        line(&mut out, "all", &self.overall);
        for (c, g) in &self.per_category {
            line(&mut out, c.as_str(), g);
        }
        for (k, g) in &self.per_query_kind {
            line(&mut out, k.as_str(), g);
        }
        out
    }
}
