use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::path::Path;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::bench::QuestionInstance;
use crate::causal::Label;
use crate::io::{self, io_err};
use crate::provider::{post_json, with_retry, ProcessCommand, ProviderError, RetryPolicy};
use crate::split::DatasetSplit;

use super::{build_prompt, parse_answer, parse_answer_lenient, Condition, EvalError, EvalRecord, PromptConfig};

/// Decoding settings forwarded to the provider; temperature 0 means greedy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub id: String,
    pub prompt: String,
    pub max_new_tokens: u32,
    pub decode: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub id: String,
    pub completion: String,
}

#[async_trait]
pub trait InferenceProvider: Send + Sync {
    fn name(&self) -> String;

    async fn generate(&self, request: &InferenceRequest) -> Result<InferenceResponse, ProviderError>;
}

fn check_id(req: &InferenceRequest, resp: InferenceResponse) -> Result<InferenceResponse, ProviderError> {
    if resp.id != req.id {
        return Err(ProviderError::Rejected(format!(
            "response id {} for request {}",
            resp.id, req.id
        )));
    }
    Ok(resp)
}

#[derive(Debug, Clone)]
pub struct HttpInferenceProvider {
    pub url: String,
    pub api_key: Option<String>,
    client: reqwest::Client,
}

impl HttpInferenceProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            url: url.into(),
            api_key,
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl InferenceProvider for HttpInferenceProvider {
    fn name(&self) -> String {
        self.url.clone()
    }

    async fn generate(&self, request: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
        let resp = post_json(&self.client, &self.url, self.api_key.as_deref(), request).await?;
        check_id(request, resp)
    }
}

#[derive(Debug, Clone)]
pub struct ProcessInferenceProvider {
    pub command: ProcessCommand,
}

#[async_trait]
impl InferenceProvider for ProcessInferenceProvider {
    fn name(&self) -> String {
        format!("process:{}", self.command.program.display())
    }

    async fn generate(&self, request: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
        check_id(request, self.command.call(request).await?)
    }
}

fn echo(labels: &HashMap<String, Label>, req: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
    let label = labels
        .get(&req.id)
        .ok_or_else(|| ProviderError::Rejected(format!("unknown question {}", req.id)))?;
    Ok(InferenceResponse {
        id: req.id.clone(),
        completion: format!("Reasoning omitted, therefore\n{label}"),
    })
}

/// Mock that always answers with the gold label.
#[derive(Debug, Clone, Default)]
pub struct GoldEcho {
    labels: HashMap<String, Label>,
}

impl GoldEcho {
    pub fn new<'a>(questions: impl IntoIterator<Item = &'a QuestionInstance>) -> Self {
        Self {
            labels: questions.into_iter().map(|q| (q.id.clone(), q.label)).collect(),
        }
    }
}

#[async_trait]
impl InferenceProvider for GoldEcho {
    fn name(&self) -> String {
        "mock:gold-echo".into()
    }

    async fn generate(&self, request: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
        echo(&self.labels, request)
    }
}

/// Mock semantic matcher: answers each test question with the label of the
/// other member of its pair, which sits in the training split.
#[derive(Debug, Clone, Default)]
pub struct PairedLabel {
    labels: HashMap<String, Label>,
}

impl PairedLabel {
    pub fn new(train: &[QuestionInstance], test: &[QuestionInstance]) -> Self {
        let by_pair: BTreeMap<&str, Label> =
            train.iter().map(|q| (q.pair_id.as_str(), q.label)).collect();
        Self {
            labels: test
                .iter()
                .filter_map(|q| by_pair.get(q.pair_id.as_str()).map(|l| (q.id.clone(), *l)))
                .collect(),
        }
    }

    pub fn from_split(split: &DatasetSplit) -> Self {
        Self::new(&split.train, &split.test)
    }
}

#[async_trait]
impl InferenceProvider for PairedLabel {
    fn name(&self) -> String {
        "mock:paired-label".into()
    }

    async fn generate(&self, request: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
        echo(&self.labels, request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub condition: Condition,
    pub prompt: PromptConfig,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub max_new_tokens: u32,
    pub decode: DecodeParams,
    /// Accept near-miss answers; off for reported numbers.
    pub lenient: bool,
    pub strategy: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            condition: Condition::Clean,
            prompt: PromptConfig::default(),
            concurrency: 8,
            retry: RetryPolicy::default(),
            max_new_tokens: 256,
            decode: DecodeParams::default(),
            lenient: false,
            strategy: None,
        }
    }
}

/// Queries the provider for every question with at most
/// `options.concurrency` requests in flight. Each answered question is
/// appended to `checkpoint` as it completes; a rerun with the same
/// checkpoint only asks for the rest. Rejections and timeouts become
/// Invalid records; an unavailable provider aborts the run.
pub async fn run_eval(
    questions: &[QuestionInstance],
    provider: &dyn InferenceProvider,
    options: &EvalOptions,
    checkpoint: Option<&Path>,
) -> Result<Vec<EvalRecord>, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let mut done: BTreeMap<String, EvalRecord> = BTreeMap::new();
    let mut sink = None;
    if let Some(path) = checkpoint {
        if path.exists() {
            for r in io::read_jsonl::<EvalRecord>(path)? {
                done.insert(r.question_id.clone(), r);
            }
        }
        sink = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err(path))?,
        );
    }

    let mut pending: Vec<&QuestionInstance> =
        questions.iter().filter(|q| !done.contains_key(&q.id)).collect();
    pending.sort_by(|a, b| a.id.cmp(&b.id));
    let resumed = questions.len() - pending.len();
    if resumed > 0 {
        tracing::info!(resumed, remaining = pending.len(), "resuming from checkpoint");
    }

    let parse = if options.lenient { parse_answer_lenient } else { parse_answer };
    let mut results = stream::iter(pending.iter().copied())
        .map(|q| async move {
            let req = InferenceRequest {
                id: q.id.clone(),
                prompt: build_prompt(q, options.condition, &options.prompt).text,
                max_new_tokens: options.max_new_tokens,
                decode: options.decode,
            };
            (q, with_retry(&options.retry, || provider.generate(&req)).await)
        })
        .buffer_unordered(options.concurrency.max(1));

    let mut answered = 0;
    while let Some((q, outcome)) = results.next().await {
        let record = match outcome {
            Ok(resp) => {
                let parsed = parse(&resp.completion);
                EvalRecord::new(q, options.condition, options.strategy.clone(), resp.completion, parsed)
            }
            Err(ProviderError::Unavailable(reason)) => {
                drop(results);
                let completed = done.len();
                return Err(EvalError::Aborted {
                    reason,
                    completed,
                    remaining: questions.len() - completed,
                    checkpoint: checkpoint.map(|p| p.display().to_string()),
                });
            }
            Err(e) => {
                tracing::warn!(id = %q.id, error = %e, "question recorded as invalid");
                EvalRecord::failed(q, options.condition, options.strategy.clone(), e.to_string())
            }
        };
        if let (Some(file), Some(path)) = (sink.as_mut(), checkpoint) {
            io::append_jsonl(file, &record).map_err(io_err(path))?;
        }
        answered += 1;
        done.insert(record.question_id.clone(), record);
    }
    tracing::debug!(answered, "evaluation finished");

    let wanted: std::collections::BTreeSet<&str> = questions.iter().map(|q| q.id.as_str()).collect();
    Ok(done
        .into_values()
        .filter(|r| wanted.contains(r.question_id.as_str()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_benchmark, GenerationConfig};
    use crate::causal::DatasetKind;
    use crate::eval::{score, Parsed};
    use crate::split::pairwise_split;
    use crate::templates::TemplateSet;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    fn split() -> DatasetSplit {
        let cfg = GenerationConfig::new(DatasetKind::Chain, 2, 4);
        let b = generate_benchmark(&cfg, &crate::bench::tests::pooled(4), &TemplateSet::builtin())
            .unwrap();
        pairwise_split(&b, 4).unwrap()
    }

    fn fast() -> EvalOptions {
        EvalOptions {
            concurrency: 2,
            retry: RetryPolicy {
                max_attempts: 2,
                base_delay_ms: 1,
                timeout_ms: 500,
            },
            ..EvalOptions::default()
        }
    }

    #[tokio::test]
    async fn mocks_give_one_and_zero() {
        let s = split();
        let gold = run_eval(&s.test, &GoldEcho::new(&s.test), &fast(), None).await.unwrap();
        assert_eq!(score::<f64>(&gold).unwrap().accuracy(), 1.0);
        let paired = run_eval(&s.test, &PairedLabel::from_split(&s), &fast(), None).await.unwrap();
        assert_eq!(score::<f64>(&paired).unwrap().accuracy(), 0.0);
        assert!(gold.windows(2).all(|w| w[0].question_id < w[1].question_id));
    }

    /// Replies out of order and garbles one answer.
    struct Jittery;

    #[async_trait]
    impl InferenceProvider for Jittery {
        fn name(&self) -> String {
            "jittery".into()
        }
        async fn generate(&self, r: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
            let delay = r.id.bytes().map(u64::from).sum::<u64>() % 7;
            tokio::time::sleep(Duration::from_millis(delay)).await;
            if r.id.ends_with("00000-q1") {
                return Err(ProviderError::Rejected("garbage".into()));
            }
            Ok(InferenceResponse {
                id: r.id.clone(),
                completion: "Yes".into(),
            })
        }
    }

    #[tokio::test]
    async fn ordered_output_and_contained_failures() {
        let s = split();
        let recs = run_eval(&s.test, &Jittery, &fast(), None).await.unwrap();
        assert_eq!(recs.len(), s.test.len());
        assert!(recs.windows(2).all(|w| w[0].question_id < w[1].question_id));
        let bad: Vec<_> = recs.iter().filter(|r| r.error.is_some()).collect();
        assert!(!bad.is_empty());
        assert!(bad.iter().all(|r| r.parsed == Parsed::Invalid && !r.correct));
    }

    struct FailAfter {
        ok: usize,
        calls: AtomicUsize,
    }

    #[async_trait]
    impl InferenceProvider for FailAfter {
        fn name(&self) -> String {
            "fail-after".into()
        }
        async fn generate(&self, r: &InferenceRequest) -> Result<InferenceResponse, ProviderError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) >= self.ok {
                return Err(ProviderError::Unavailable("down".into()));
            }
            Ok(InferenceResponse {
                id: r.id.clone(),
                completion: "No".into(),
            })
        }
    }

    #[tokio::test]
    async fn abort_then_resume() {
        let s = split();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("ckpt.jsonl");
        let opts = EvalOptions {
            concurrency: 1,
            ..fast()
        };
        let flaky = FailAfter {
            ok: 3,
            calls: AtomicUsize::new(0),
        };
        let err = run_eval(&s.test, &flaky, &opts, Some(&ckpt)).await.unwrap_err();
        assert!(matches!(err, EvalError::Aborted { completed: 3, .. }), "{err}");

        let counting = FailAfter {
            ok: usize::MAX,
            calls: AtomicUsize::new(0),
        };
        let recs = run_eval(&s.test, &counting, &opts, Some(&ckpt)).await.unwrap();
        assert_eq!(recs.len(), s.test.len());
        assert_eq!(counting.calls.load(Ordering::SeqCst), s.test.len() - 3);
    }
}
