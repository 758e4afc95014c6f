//! Training-sample assembly, progressive mask schedules and noisy-prefix
//! injection. Spans are half-open character (code point) offsets so the
//! consumer can map them onto any tokenizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::QuestionInstance;
use crate::causal::{EventTriple, Label};
use crate::num::Scalar;

/// Shipped noisy prefix: small talk with no causal content.
pub const DEFAULT_NOISY_PREFIX: &str = "The weather this morning was mild with a light breeze \
from the west. A neighbor mentioned that the corner bakery now opens an hour earlier. \
Someone at the office is planning a short hiking trip for next month.";

#[derive(Debug, Error, PartialEq)]
pub enum ExportError {
    #[error("question {0} has no reasoning text")]
    MissingReasoning(String),
    #[error("sample {0}: no reasoning segment to prefix in no-CoT mode")]
    Mode(String),
    #[error("sample {0} already carries a noisy prefix")]
    AlreadyNoisy(String),
    #[error("noisy prefix mentions event phrase {phrase:?} of question {question_id}")]
    PrefixPhrase { question_id: String, phrase: String },
    #[error("schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "nocot")]
    NoCot,
    #[serde(rename = "explicit")]
    ExplicitCot,
    #[serde(rename = "implicit")]
    ImplicitCot,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoCot => "nocot",
            Self::ExplicitCot => "explicit",
            Self::ImplicitCot => "implicit",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nocot" => Ok(Self::NoCot),
            "explicit" => Ok(Self::ExplicitCot),
            "implicit" => Ok(Self::ImplicitCot),
            _ => Err(ExportError::Schedule(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    /// Piecewise constant with `stages` equal steps up to the terminal value.
    Stepwise,
}

/// Fraction ρ(t) of leading reasoning tokens removed from supervision at step t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MaskSchedule<S: Scalar> {
    pub kind: ScheduleKind,
    #[serde(rename = "T_ramp")]
    pub ramp_steps: u64,
    pub terminal_fraction: S,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<u32>,
}

impl<S: Scalar> MaskSchedule<S> {
    pub fn linear(ramp_steps: u64, terminal_fraction: S) -> Result<Self, ExportError> {
        Self {
            kind: ScheduleKind::Linear,
            ramp_steps,
            terminal_fraction,
            stages: None,
        }
        .validated()
    }

    pub fn stepwise(ramp_steps: u64, terminal_fraction: S, stages: u32) -> Result<Self, ExportError> {
        Self {
            kind: ScheduleKind::Stepwise,
            ramp_steps,
            terminal_fraction,
            stages: Some(stages),
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, ExportError> {
        if self.ramp_steps == 0 {
            return Err(ExportError::Schedule("T_ramp must be positive".into()));
        }
        if !(self.terminal_fraction >= S::zero() && self.terminal_fraction <= S::one()) {
            return Err(ExportError::Schedule(format!(
                "terminal_fraction {} outside [0, 1]",
                self.terminal_fraction
            )));
        }
        match (self.kind, self.stages) {
            (ScheduleKind::Stepwise, None | Some(0)) => {
                Err(ExportError::Schedule("stepwise schedule needs stages >= 1".into()))
            }
            (ScheduleKind::Linear, Some(_)) => {
                Err(ExportError::Schedule("linear schedule takes no stages".into()))
            }
            _ => Ok(self),
        }
    }

    /// The same ramp with nothing ever masked: explicit supervision.
    pub fn unmasked(self) -> Self {
        Self {
            terminal_fraction: S::zero(),
            ..self
        }
    }

    /// ρ(t) ∈ [0, terminal_fraction].
    pub fn mask_fraction(&self, t: u64) -> S {
        let done = t.min(self.ramp_steps);
        let progress = match (self.kind, self.stages) {
            (ScheduleKind::Stepwise, Some(stages)) => {
                let stage = done as u128 * stages as u128 / self.ramp_steps as u128;
                S::from_count(stage as usize) / S::from_count(stages as usize)
            }
            _ => S::from_count(done as usize) / S::from_count(self.ramp_steps as usize),
        };
        self.terminal_fraction * progress
    }

    /// r(t) = floor(ρ(t) · L), the number of leading reasoning tokens masked.
    pub fn masked_tokens(&self, t: u64, reasoning_len: usize) -> usize {
        let r = (self.mask_fraction(t) * S::from_count(reasoning_len)).floor();
        r.to_usize().unwrap_or(0).min(reasoning_len)
    }

    /// m_k(t) = 1[k > r(t)] for k = 1..=L: `true` means supervised. The
    /// answer is outside this mask and always supervised.
    pub fn supervision_mask(&self, t: u64, reasoning_len: usize) -> Vec<bool> {
        let r = self.masked_tokens(t, reasoning_len);
        (1..=reasoning_len).map(|k| k > r).collect()
    }
}

/// Half-open `[start, end)` character range, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// The spanned characters of `text`.
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        let byte = |c: usize| text.char_indices().nth(c).map_or(text.len(), |(b, _)| b);
        &text[byte(self.start)..byte(self.end)]
    }

    fn shifted(self, by: usize) -> Self {
        Self {
            start: self.start + by,
            end: self.end + by,
        }
    }
}

/// Layout: `question \n reasoning \n answer`, or `question \n answer` without reasoning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub question_id: String,
    pub mode: Mode,
    pub full_text: String,
    pub question_span: Span,
    pub reasoning_span: Option<Span>,
    pub answer_span: Span,
    /// Inside `reasoning_span` when a noisy prefix was injected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_span: Option<Span>,
    pub label: Label,
    pub noisy: bool,
}

fn chars(s: &str) -> usize {
    s.chars().count()
}

pub fn assemble_sample(q: &QuestionInstance, mode: Mode) -> Result<TrainingSample, ExportError> {
    let qlen = chars(&q.question_text);
    let answer = q.label.as_str();
    let (full_text, reasoning_span, answer_start) = match mode {
        Mode::NoCot => (format!("{}\n{answer}", q.question_text), None, qlen + 1),
        Mode::ExplicitCot | Mode::ImplicitCot => {
            if q.reasoning_text.trim().is_empty() {
                return Err(ExportError::MissingReasoning(q.id.clone()));
            }
            let rlen = chars(&q.reasoning_text);
            let span = Span {
                start: qlen + 1,
                end: qlen + 1 + rlen,
            };
            (
                format!("{}\n{}\n{answer}", q.question_text, q.reasoning_text),
                Some(span),
                span.end + 1,
            )
        }
    };
    Ok(TrainingSample {
        question_id: q.id.clone(),
        mode,
        full_text,
        question_span: Span { start: 0, end: qlen },
        reasoning_span,
        answer_span: Span {
            start: answer_start,
            end: answer_start + chars(answer),
        },
        prefix_span: None,
        label: q.label,
        noisy: false,
    })
}

/// The fixed block inserted before the reasoning of every sample in a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyPrefixSpec {
    pub prefix_text: String,
}

impl Default for NoisyPrefixSpec {
    fn default() -> Self {
        Self {
            prefix_text: DEFAULT_NOISY_PREFIX.to_string(),
        }
    }
}

impl NoisyPrefixSpec {
    pub fn new(prefix_text: impl Into<String>) -> Self {
        Self {
            prefix_text: prefix_text.into().trim().to_string(),
        }
    }

    /// Fails if the prefix mentions any of the triple's event phrases (case-insensitive).
    pub fn check_against(&self, question_id: &str, triple: &EventTriple) -> Result<(), ExportError> {
        let lower = self.prefix_text.to_lowercase();
        for (_, phrase) in triple.phrases() {
            if lower.contains(&phrase.to_lowercase()) {
                return Err(ExportError::PrefixPhrase {
                    question_id: question_id.to_string(),
                    phrase: phrase.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Inserts `prefix + " "` at the start of the reasoning span. The reasoning
/// span grows to cover the prefix; the answer span shifts; nothing else moves.
pub fn inject_noisy_prefix(
    sample: TrainingSample,
    spec: &NoisyPrefixSpec,
) -> Result<TrainingSample, ExportError> {
    let Some(reasoning) = sample.reasoning_span else {
        return Err(ExportError::Mode(sample.question_id));
    };
    if sample.noisy {
        return Err(ExportError::AlreadyNoisy(sample.question_id));
    }
    if spec.prefix_text.is_empty() {
        return Ok(sample);
    }
    let insert = format!("{} ", spec.prefix_text);
    let added = chars(&insert);
    let at = sample
        .full_text
        .char_indices()
        .nth(reasoning.start)
        .map_or(sample.full_text.len(), |(b, _)| b);
    let mut full_text = String::with_capacity(sample.full_text.len() + insert.len());
    full_text.push_str(&sample.full_text[..at]);
    full_text.push_str(&insert);
    full_text.push_str(&sample.full_text[at..]);
    Ok(TrainingSample {
        full_text,
        reasoning_span: Some(Span {
            start: reasoning.start,
            end: reasoning.end + added,
        }),
        prefix_span: Some(Span {
            start: reasoning.start,
            end: reasoning.start + chars(&spec.prefix_text),
        }),
        answer_span: sample.answer_span.shifted(added),
        noisy: true,
        ..sample
    })
}

/// One line of the training export file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrainingRecord<S: Scalar> {
    #[serde(flatten)]
    pub sample: TrainingSample,
    /// Absent for no-CoT; explicit CoT carries a zero terminal fraction.
    pub schedule: Option<MaskSchedule<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportConfig<S: Scalar> {
    pub mode: Mode,
    /// Ramp used for implicit mode; explicit mode uses it with ρ ≡ 0.
    pub schedule: MaskSchedule<S>,
    pub noisy_prefix: Option<NoisyPrefixSpec>,
}

/// Assembles, optionally prefixes, and attaches schedules to every question.
/// Output is sorted by question id.
pub fn export_training<'a, S: Scalar>(
    questions: impl IntoIterator<Item = &'a QuestionInstance>,
    config: &ExportConfig<S>,
) -> Result<Vec<TrainingRecord<S>>, ExportError> {
    let schedule = match config.mode {
        Mode::NoCot => None,
        Mode::ExplicitCot => Some(config.schedule.validated()?.unmasked()),
        Mode::ImplicitCot => Some(config.schedule.validated()?),
    };
    let mut out = Vec::new();
    for q in questions {
        let mut sample = assemble_sample(q, config.mode)?;
        if let Some(spec) = &config.noisy_prefix {
            spec.check_against(&q.id, &q.triple)?;
            sample = inject_noisy_prefix(sample, spec)?;
        }
        out.push(TrainingRecord { sample, schedule });
    }
    out.sort_by(|a, b| a.sample.question_id.cmp(&b.sample.question_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_benchmark, Category, GenerationConfig};
    use crate::causal::{DatasetKind, QueryKind};
    use crate::templates::TemplateSet;

    fn bench(kind: DatasetKind) -> crate::bench::Benchmark {
        let cfg = GenerationConfig::new(kind, 2, 5);
        generate_benchmark(&cfg, &crate::bench::tests::pooled(4), &TemplateSet::builtin()).unwrap()
    }

    fn check_layout(s: &TrainingSample, q: &QuestionInstance) {
        assert_eq!(s.question_span.slice(&s.full_text), q.question_text);
        assert_eq!(s.answer_span.slice(&s.full_text), q.label.as_str());
        assert_eq!(s.answer_span.end, s.full_text.chars().count());
        if let Some(r) = s.reasoning_span {
            assert!(s.question_span.end < r.start && r.end < s.answer_span.start);
        }
    }

    #[test]
    fn layouts_and_spans() {
        let b = bench(DatasetKind::Confounder);
        for q in b.questions() {
            let no = assemble_sample(q, Mode::NoCot).unwrap();
            assert_eq!(no.reasoning_span, None);
            assert_eq!(no.answer_span.start, no.question_span.end + 1);
            check_layout(&no, q);
            let ex = assemble_sample(q, Mode::ExplicitCot).unwrap();
            let im = assemble_sample(q, Mode::ImplicitCot).unwrap();
            assert_eq!(ex.full_text, im.full_text);
            assert_eq!(ex.reasoning_span.unwrap().slice(&ex.full_text), q.reasoning_text);
            check_layout(&ex, q);
        }
    }

    #[test]
    fn confounder_base_q1_answers_no() {
        let b = bench(DatasetKind::Confounder);
        let q = b
            .questions()
            .find(|q| q.category == Category::BD && q.query_kind == QueryKind::Q1)
            .unwrap();
        let s = assemble_sample(q, Mode::ExplicitCot).unwrap();
        let r = s.reasoning_span.unwrap().slice(&s.full_text);
        assert!(r.starts_with(&format!("No directed causal path from {} to {}", q.triple.x, q.triple.y)));
        assert_eq!(s.answer_span.slice(&s.full_text), "No");
    }

    #[test]
    fn missing_reasoning_is_an_error() {
        let b = bench(DatasetKind::Chain);
        let mut q = b.pairs[0].q1.clone();
        q.reasoning_text.clear();
        assert!(matches!(
            assemble_sample(&q, Mode::ImplicitCot),
            Err(ExportError::MissingReasoning(_))
        ));
        assert!(assemble_sample(&q, Mode::NoCot).is_ok());
    }

    #[test]
    fn prefix_injection_preserves_segments() {
        let b = bench(DatasetKind::Collider);
        let spec = NoisyPrefixSpec::default();
        for q in b.questions() {
            let clean = assemble_sample(q, Mode::ExplicitCot).unwrap();
            let noisy = inject_noisy_prefix(clean.clone(), &spec).unwrap();
            check_layout(&noisy, q);
            let r = noisy.reasoning_span.unwrap().slice(&noisy.full_text);
            assert_eq!(r, format!("{} {}", spec.prefix_text, q.reasoning_text));
            assert_eq!(noisy.prefix_span.unwrap().slice(&noisy.full_text), spec.prefix_text);
            assert_eq!(noisy.full_text.matches(&spec.prefix_text).count(), 1);
            assert!(matches!(
                inject_noisy_prefix(noisy, &spec),
                Err(ExportError::AlreadyNoisy(_))
            ));
            assert_eq!(inject_noisy_prefix(clean.clone(), &NoisyPrefixSpec::new("")).unwrap(), clean);
            let nocot = assemble_sample(q, Mode::NoCot).unwrap();
            assert!(matches!(inject_noisy_prefix(nocot, &spec), Err(ExportError::Mode(_))));
        }
    }

    #[test]
    fn spans_count_characters_not_bytes() {
        let b = bench(DatasetKind::Chain);
        let mut q = b.pairs[0].q1.clone();
        q.question_text = "Été à Zürich?".into();
        let s = inject_noisy_prefix(
            assemble_sample(&q, Mode::ExplicitCot).unwrap(),
            &NoisyPrefixSpec::new("Ça va, très bien."),
        )
        .unwrap();
        check_layout(&s, &q);
        assert_eq!(s.prefix_span.unwrap().slice(&s.full_text), "Ça va, très bien.");
    }

    #[test]
    fn prefix_with_event_phrase_is_refused() {
        let b = bench(DatasetKind::Chain);
        let q = &b.pairs[0].q1;
        let spec = NoisyPrefixSpec::new(format!("Nothing about {}.", q.triple.y.to_uppercase()));
        let cfg = ExportConfig {
            mode: Mode::ExplicitCot,
            schedule: MaskSchedule::<f64>::linear(10, 1.0).unwrap(),
            noisy_prefix: Some(spec),
        };
        assert!(matches!(
            export_training([q], &cfg),
            Err(ExportError::PrefixPhrase { .. })
        ));
    }

    #[test]
    fn schedule_values() {
        let s = MaskSchedule::<f64>::linear(100, 1.0).unwrap();
        assert_eq!(s.mask_fraction(0), 0.0);
        assert_eq!(s.mask_fraction(50), 0.5);
        assert_eq!(s.mask_fraction(100), 1.0);
        assert_eq!(s.mask_fraction(1000), 1.0);
        assert_eq!(s.masked_tokens(0, 12), 0);
        assert_eq!(s.masked_tokens(100, 12), 12);
        assert_eq!(s.supervision_mask(50, 4), vec![false, false, true, true]);
        assert!(s.supervision_mask(200, 4).iter().all(|m| !m));
        let st = MaskSchedule::<f32>::stepwise(90, 1.0, 3).unwrap();
        assert_eq!(st.mask_fraction(29), 0.0);
        assert_eq!(st.mask_fraction(30), 1.0 / 3.0);
        assert_eq!(st.mask_fraction(90), 1.0);
        assert!(MaskSchedule::<f64>::linear(0, 1.0).is_err());
        assert!(MaskSchedule::<f64>::linear(5, 1.5).is_err());
        assert!(MaskSchedule::<f64>::stepwise(5, 1.0, 0).is_err());
    }

    #[test]
    fn export_modes_and_record_shape() {
        let b = bench(DatasetKind::Confounder);
        let sched = MaskSchedule::<f64>::linear(8, 1.0).unwrap();
        let mk = |mode| ExportConfig {
            mode,
            schedule: sched,
            noisy_prefix: None,
        };
        let ex = export_training(b.questions(), &mk(Mode::ExplicitCot)).unwrap();
        let im = export_training(b.questions(), &mk(Mode::ImplicitCot)).unwrap();
        let no = export_training(b.questions(), &mk(Mode::NoCot)).unwrap();
        assert_eq!(ex.len(), b.len_questions());
        assert!(ex.windows(2).all(|w| w[0].sample.question_id < w[1].sample.question_id));
        assert_eq!(ex[0].schedule.unwrap().terminal_fraction, 0.0);
        assert_eq!(im[0].schedule, Some(sched));
        for (e, i) in ex.iter().zip(&im) {
            assert_eq!(e.sample.full_text, i.sample.full_text);
        }
        let v = serde_json::to_value(&no[0]).unwrap();
        assert!(v["schedule"].is_null() && v["reasoning_span"].is_null());
        let v = serde_json::to_value(&im[0]).unwrap();
        assert_eq!(v["schedule"]["T_ramp"], 8);
        assert_eq!(v["schedule"]["kind"], "linear");
        assert_eq!(v["mode"], "implicit");
        assert!(v["question_span"].is_array());
        let back: TrainingRecord<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, im[0]);
    }
}
