//! Procedural generator, skew auditor, training exporter and evaluation
//! harness for label-flipped causal-judgment benchmarks over three-node
//! causal structures.
//!
//! Numeric parts are generic over [`num::Scalar`] (`f32` or `f64`); exact
//! quantities such as accuracies use [`num::Ratio`]. The aliases below fix
//! the scalar to `f64` (or `f32` for embeddings).

pub mod bench;
pub mod causal;
pub mod eval;
pub mod export;
pub mod io;
pub mod num;
pub mod provider;
pub mod skew;
pub mod split;
pub mod templates;
pub mod triples;

pub use bench::{
    generate_benchmark, Benchmark, Category, GenerationConfig, QuestionInstance, QuestionPair,
    QuestionRecord, SplitTag,
};
pub use causal::{derive_label, DatasetKind, EventTriple, Label, Polarity, QueryKind, StructureSpec};
pub use eval::{build_prompt, parse_answer, run_eval, Condition, EvalRecord, Parsed};
pub use export::{assemble_sample, inject_noisy_prefix, Mode, NoisyPrefixSpec, TrainingSample};
pub use num::{Ratio, Scalar, SignedRatio};
pub use split::{pairwise_split, DatasetSplit};
pub use templates::TemplateSet;

pub type MaskSchedule = export::MaskSchedule<f64>;
pub type TrainingRecord = export::TrainingRecord<f64>;
pub type ExportConfig = export::ExportConfig<f64>;
pub type Metrics = eval::Metrics<f64>;
pub type GroupMetrics = eval::GroupMetrics<f64>;
pub type DegradationReport = eval::DegradationReport<f64>;
pub type SkewReport = skew::SkewReport<f64>;
pub type Offender = skew::Offender<f64>;
pub type Embeddings = skew::EmbeddingTable<f32>;
pub type EmbeddingsF64 = skew::EmbeddingTable<f64>;
