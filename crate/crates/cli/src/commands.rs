use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use flipbench::bench::{BenchProvenance, Benchmark, GenerationConfig, SplitTag};
use flipbench::eval::{self, EvalOptions, PromptConfig};
use flipbench::export::{self, ExportConfig, MaskSchedule};
use flipbench::io::{self, ArtifactProvenance};
use flipbench::provider::{ProcessCommand, RetryPolicy};
use flipbench::skew::{
    self, EmbeddingCache, EmbeddingProvider, EmbeddingTable, HashingEmbedder, HttpEmbeddingProvider,
    ProcessEmbeddingProvider, ReplacementMap, SkewReport,
};
use flipbench::split::read_split_file;
use flipbench::triples::load_triples;
use flipbench::{
    generate_benchmark, pairwise_split, Condition, DatasetKind, EvalRecord, Mode, NoisyPrefixSpec, QuestionInstance,
    TemplateSet,
};
use serde::Serialize;
use serde_json::{json, Value};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;
use tracing::{info, warn};

use crate::config::{PipelineConfig, ProviderConfig, ENV_API_KEY};
use crate::{
    AuditArgs, AuditMode, Cli, Command, ConditionArg, EmbedderKind, EvaluateArgs, ExportArgs, GenerateArgs,
    ReplaceArgs, ReportArgs, ScheduleArg, SplitArgs,
};

const DEFAULT_RAMP_FRAC: f64 = 0.667;
const DEFAULT_EPOCHS: u64 = 3;
const DEFAULT_BATCH_SIZE: u64 = 4;

struct Ctx {
    seed: Option<u64>,
    config: PipelineConfig,
    command: &'static str,
}

pub fn run(cli: Cli) -> Result<()> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed);
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Audit(_) => "audit",
        Command::Replace(_) => "replace",
        Command::Split(_) => "split",
        Command::ExportTraining(_) => "export-training",
        Command::Evaluate(_) => "evaluate",
        Command::Report(_) => "report",
    };
    let ctx = Ctx {
        seed,
        config,
        command: name,
    };
    match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Audit(a) => audit(&ctx, a),
        Command::Replace(a) => replace(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::ExportTraining(a) => export_training(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

/// Honors SOURCE_DATE_EPOCH so repeated runs can be byte-identical.
fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(io::unix_now)
}

fn rfc3339(secs: u64) -> String {
    OffsetDateTime::from_unix_timestamp(secs as i64)
        .ok()
        .and_then(|t| t.format(&Rfc3339).ok())
        .unwrap_or_default()
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("read {}", path.display()))?;
    Ok(io::sha256_hex(&bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("write {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn stamp(ctx: &Ctx, out: &Path, settings: &impl Serialize, inputs: &[&Path], details: Value) -> Result<()> {
    let mut hashes = BTreeMap::new();
    for p in inputs {
        hashes.insert(p.display().to_string(), file_hash(p)?);
    }
    let mut details = details;
    if let (Some(id), Value::Object(map)) = (&ctx.config.run_id, &mut details) {
        map.insert("run_id".into(), json!(id));
    }
    ArtifactProvenance {
        tool: "flipbench".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: ctx.command.into(),
        seed: ctx.seed,
        config_hash: io::json_hash(&serde_json::to_value(settings)?),
        inputs: hashes,
        output_hash: file_hash(out)?,
        details,
        created_at_unix: timestamp(),
    }
    .write_for(out)?;
    Ok(())
}

fn load_templates(path: Option<&Path>) -> Result<TemplateSet> {
    match path {
        Some(p) => TemplateSet::load(p).with_context(|| format!("templates {}", p.display())),
        None => Ok(TemplateSet::builtin()),
    }
}

/// Reads a benchmark, recovering its provenance from the sidecar if present.
fn load_benchmark(path: &Path) -> Result<Benchmark> {
    let provenance = ArtifactProvenance::read_for(path)?
        .and_then(|p| p.details.get("benchmark").cloned())
        .map(serde_json::from_value::<BenchProvenance>)
        .transpose()?
        .unwrap_or_else(|| {
            warn!("{} has no provenance sidecar", path.display());
            BenchProvenance {
                config_hash: String::new(),
                seed: 0,
                template_hash: String::new(),
                replacement_rounds: Vec::new(),
            }
        });
    Benchmark::read(path, provenance).with_context(|| format!("benchmark {}", path.display()))
}

fn read_prefix(path: &Path) -> Result<NoisyPrefixSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let spec = NoisyPrefixSpec::new(text);
    ensure!(!spec.prefix_text.is_empty(), "noisy prefix file {} is empty", path.display());
    Ok(spec)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    let c = &ctx.config.generate;
    let dataset: DatasetKind = a
        .dataset
        .or(c.dataset.clone())
        .context("--dataset is required")?
        .parse()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let ppc = a
        .pairs_per_category
        .or(c.pairs_per_category)
        .context("--pairs-per-category is required")?;
    let triples_path = a.triples.or(c.triples.clone()).context("--triples is required")?;
    let templates_path = a.templates.or(c.templates.clone());
    let templates = load_templates(templates_path.as_deref())?;
    let triples = load_triples(&triples_path)?;

    let mut config = GenerationConfig::new(dataset, ppc, ctx.seed.unwrap_or(0));
    config.share_pools = a.share_pools || c.share_pools.unwrap_or(false);
    let bench = generate_benchmark(&config, &triples, &templates)?;
    bench.write(&a.out)?;
    info!(
        pairs = bench.pairs.len(),
        questions = bench.len_questions(),
        "wrote {}",
        a.out.display()
    );

    let mut inputs = vec![triples_path.as_path()];
    inputs.extend(templates_path.as_deref());
    stamp(
        ctx,
        &a.out,
        &config,
        &inputs,
        json!({"benchmark": bench.provenance, "generation": config}),
    )
}

fn embedder(a: &AuditArgs, ctx: &Ctx) -> Result<Box<dyn EmbeddingProvider>> {
    let c = &ctx.config.audit;
    let kind = match (a.embedder, c.embedder.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("hashing")) => EmbedderKind::Hashing,
        (None, Some("http")) => EmbedderKind::Http,
        (None, Some("process")) => EmbedderKind::Process,
        (None, Some(other)) => bail!("unknown embedder {other:?}"),
    };
    Ok(match kind {
        EmbedderKind::Hashing => Box::new(HashingEmbedder::default()),
        EmbedderKind::Http => {
            let url = a
                .embed_url
                .clone()
                .or(c.embed_url.clone())
                .context("http embedder needs --embed-url")?;
            Box::new(HttpEmbeddingProvider::new(url, std::env::var(ENV_API_KEY).ok()))
        }
        EmbedderKind::Process => {
            let cmd = a
                .embed_command
                .clone()
                .or(c.embed_command.clone())
                .context("process embedder needs --embed-command")?;
            let (program, args) = cmd.split_first().context("empty --embed-command")?;
            Box::new(ProcessEmbeddingProvider {
                command: ProcessCommand {
                    program: program.into(),
                    args: args.to_vec(),
                },
            })
        }
    })
}

fn audit(ctx: &Ctx, a: AuditArgs) -> Result<()> {
    let c = &ctx.config.audit;
    let bench = load_benchmark(&a.benchmark)?;
    let mut inputs = vec![a.benchmark.as_path()];
    let mut report: SkewReport<f64> = match a.mode {
        AuditMode::Count => {
            let threshold = a.threshold.or(c.threshold).unwrap_or(skew::DEFAULT_THRESHOLD);
            skew::count_skew(bench.questions(), threshold)?
        }
        AuditMode::Similarity => {
            let k = a.k.or(c.k).unwrap_or(skew::DEFAULT_K);
            let table: EmbeddingTable<f64> = match &a.embeddings {
                Some(p) => {
                    inputs.push(p);
                    EmbeddingTable::read(p)?
                }
                None => {
                    let provider = embedder(&a, ctx)?;
                    let mut cache = match a.cache.as_ref().or(c.cache.as_ref()) {
                        Some(p) => EmbeddingCache::open(p)?,
                        None => EmbeddingCache::in_memory(),
                    };
                    let concurrency = a.concurrency.or(c.concurrency).unwrap_or(skew::embed::DEFAULT_CONCURRENCY);
                    let qs: Vec<&QuestionInstance> = bench.questions().collect();
                    runtime()?.block_on(skew::embed_questions(
                        &qs,
                        provider.as_ref(),
                        &mut cache,
                        &RetryPolicy::default(),
                        concurrency,
                    ))?
                }
            };
            skew::neighbor_skew(bench.questions(), &table, k)?
        }
    };
    let now = timestamp();
    report.generated_at = Some(rfc3339(now));
    write_json(&a.out, &report)?;

    if report.offenders.is_empty() {
        println!("no offenders");
    } else {
        println!(
            "{} offenders; next replacement batch (top {}):",
            report.offenders.len(),
            skew::REPAIR_BATCH
        );
        for o in report.top(skew::REPAIR_BATCH) {
            let cats: Vec<String> = o.affected_categories.iter().map(|c| c.to_string()).collect();
            println!("  {:<40} score {:.3}  n={}  [{}]", o.item, o.score, o.occurrences, cats.join(","));
        }
    }
    let settings = json!({"mode": format!("{:?}", a.mode), "k": report.k, "threshold": report.threshold_used});
    stamp(ctx, &a.out, &settings, &inputs, json!({"offenders": report.offenders.len()}))
}

fn replace(ctx: &Ctx, a: ReplaceArgs) -> Result<()> {
    let bench = load_benchmark(&a.benchmark)?;
    let text = std::fs::read_to_string(&a.map).with_context(|| format!("read {}", a.map.display()))?;
    let map = ReplacementMap::from_json(&text)?;
    let templates_path = a.templates.or(ctx.config.generate.templates.clone());
    let templates = load_templates(templates_path.as_deref())?;
    let out = skew::apply_replacements(&bench, &map, &templates)?;
    out.write(&a.out)?;
    info!(rules = map.rules.len(), round = out.provenance.replacement_rounds.len(), "wrote {}", a.out.display());
    let mut inputs = vec![a.benchmark.as_path(), a.map.as_path()];
    inputs.extend(templates_path.as_deref());
    stamp(ctx, &a.out, &map, &inputs, json!({"benchmark": out.provenance}))
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    let bench = load_benchmark(&a.benchmark)?;
    let seed = ctx.seed.unwrap_or(0);
    let s = pairwise_split(&bench, seed)?;
    s.verify().map_err(|e| anyhow::anyhow!("split check failed: {e}"))?;
    write_file(&a.train, &s.train_jsonl())?;
    write_file(&a.test, &s.test_jsonl())?;
    info!(train = s.train.len(), test = s.test.len(), "split written");
    let settings = json!({"seed": seed});
    for (path, tag, n) in [(&a.train, "train", s.train.len()), (&a.test, "test", s.test.len())] {
        stamp(
            ctx,
            path,
            &settings,
            &[&a.benchmark],
            json!({"split": tag, "questions": n, "benchmark": bench.provenance}),
        )?;
    }
    Ok(())
}

/// Ramp length in optimizer steps: a fraction of the whole run, at least one.
pub fn ramp_steps(ramp_frac: f64, epochs: u64, batch_size: u64, samples: usize) -> u64 {
    let per_epoch = (samples as u64).div_ceil(batch_size.max(1));
    ((ramp_frac * (epochs * per_epoch) as f64).round() as u64).max(1)
}

fn export_training(ctx: &Ctx, a: ExportArgs) -> Result<()> {
    let c = &ctx.config.export;
    let questions = read_split_file(&a.split, SplitTag::Train)?;
    let mode: Mode = a
        .mode
        .or(c.mode.clone())
        .unwrap_or_else(|| "implicit".into())
        .parse()?;
    let ramp_frac = a.ramp_frac.or(c.ramp_frac).unwrap_or(DEFAULT_RAMP_FRAC);
    ensure!((0.0..=1.0).contains(&ramp_frac), "--ramp-frac must be in [0, 1]");
    let epochs = a.epochs.or(c.epochs).unwrap_or(DEFAULT_EPOCHS);
    let batch = a.batch_size.or(c.batch_size).unwrap_or(DEFAULT_BATCH_SIZE);
    ensure!(epochs > 0 && batch > 0, "--epochs and --batch-size must be positive");
    let t_ramp = ramp_steps(ramp_frac, epochs, batch, questions.len());
    let terminal = a.terminal.or(c.terminal).unwrap_or(1.0);
    let kind = match (a.schedule, c.schedule.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("linear")) => ScheduleArg::Linear,
        (None, Some("stepwise")) => ScheduleArg::Stepwise,
        (None, Some(other)) => bail!("unknown schedule {other:?}"),
    };
    let schedule = match kind {
        ScheduleArg::Linear => MaskSchedule::linear(t_ramp, terminal)?,
        ScheduleArg::Stepwise => MaskSchedule::stepwise(t_ramp, terminal, a.stages.or(c.stages).unwrap_or(4))?,
    };

    let prefix_path = a.noisy_prefix.or(c.noisy_prefix.clone()).filter(|_| !a.noisy);
    let noisy_prefix = match (&prefix_path, a.noisy) {
        (Some(p), _) => Some(read_prefix(p)?),
        (None, true) => Some(NoisyPrefixSpec::default()),
        (None, false) => None,
    };
    let config = ExportConfig {
        mode,
        schedule,
        noisy_prefix,
    };
    let records = export::export_training(&questions, &config)?;
    write_file(&a.out, &io::to_jsonl(&records))?;
    info!(records = records.len(), t_ramp, %mode, "wrote {}", a.out.display());

    let settings = json!({
        "mode": mode,
        "schedule": schedule,
        "noisy_prefix": config.noisy_prefix,
        "epochs": epochs,
        "batch_size": batch,
        "ramp_frac": ramp_frac,
    });
    let mut inputs = vec![a.split.as_path()];
    inputs.extend(prefix_path.as_deref());
    stamp(ctx, &a.out, &settings, &inputs, settings.clone())
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let c = &ctx.config.evaluate;
    let test = read_split_file(&a.test, SplitTag::Test)?;
    let spec = a.provider.or(c.provider.clone()).context("--provider is required")?;
    let provider_cfg = ProviderConfig::resolve(&spec)?;
    let train_path: Option<PathBuf> = a.train.or(provider_cfg.train_path().map(Path::to_path_buf));
    let train = train_path
        .as_deref()
        .map(|p| read_split_file(p, SplitTag::Train))
        .transpose()?;
    let provider = provider_cfg.build(&test, train.as_deref())?;

    let prefix_path = a.noisy_prefix.or(c.noisy_prefix.clone());
    let mut prompt = PromptConfig::default();
    if let Some(p) = &prefix_path {
        prompt.noisy_prefix = read_prefix(p)?;
    }
    if let Some(i) = &c.instruction {
        prompt.instruction = i.clone();
    }
    let defaults = EvalOptions::default();
    let options = EvalOptions {
        condition: match a.condition {
            ConditionArg::Clean => Condition::Clean,
            ConditionArg::Noisy => Condition::Noisy,
        },
        prompt,
        concurrency: a.concurrency.or(c.concurrency).unwrap_or(defaults.concurrency).max(1),
        retry: provider_cfg.retry.unwrap_or(defaults.retry),
        max_new_tokens: provider_cfg.max_new_tokens,
        decode: provider_cfg.decode.unwrap_or(defaults.decode),
        lenient: a.lenient,
        strategy: a.strategy.or(provider_cfg.strategy.clone()).or(c.strategy.clone()),
    };
    if options.lenient {
        warn!("lenient parsing is on; do not report these numbers");
    }

    let checkpoint = a.checkpoint.unwrap_or_else(|| {
        let mut name = a.out.file_name().unwrap_or_default().to_os_string();
        name.push(".checkpoint.jsonl");
        a.out.with_file_name(name)
    });
    info!(provider = provider.name(), questions = test.len(), "evaluating");
    let records = runtime()?.block_on(eval::run_eval(&test, provider.as_ref(), &options, Some(&checkpoint)))?;
    write_file(&a.out, &io::to_jsonl(&records))?;
    std::fs::remove_file(&checkpoint).ok();

    let metrics: eval::Metrics<f64> = eval::score(&records)?;
    print!("{}", metrics.to_table());
    let mut inputs = vec![a.test.as_path()];
    inputs.extend(train_path.as_deref());
    inputs.extend(prefix_path.as_deref());
    let settings = json!({"provider": provider_cfg, "options": options});
    stamp(
        ctx,
        &a.out,
        &settings,
        &inputs,
        json!({"provider": provider.name(), "options": options, "accuracy": metrics.accuracy()}),
    )
}

fn read_records(paths: &[PathBuf]) -> Result<Vec<EvalRecord>> {
    let mut all = Vec::new();
    for p in paths {
        let mut recs: Vec<EvalRecord> = io::read_jsonl(p)?;
        all.append(&mut recs);
    }
    Ok(all)
}

fn by_strategy(records: &[EvalRecord]) -> Result<BTreeMap<String, eval::Metrics<f64>>> {
    let mut groups: BTreeMap<String, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        let key = r.strategy.clone().unwrap_or_else(|| "-".into());
        groups.entry(key).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(k, v)| Ok((k, eval::score(&v)?)))
        .collect()
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let clean = read_records(&a.clean)?;
    let clean_metrics = by_strategy(&clean)?;
    let mut table = String::new();
    for (strategy, m) in &clean_metrics {
        table.push_str(&format!("== {strategy} (clean)\n{}\n", m.to_table()));
    }
    let mut out = json!({"clean": clean_metrics});
    if !a.noisy.is_empty() {
        let noisy = read_records(&a.noisy)?;
        let noisy_metrics = by_strategy(&noisy)?;
        for (strategy, m) in &noisy_metrics {
            table.push_str(&format!("== {strategy} (noisy)\n{}\n", m.to_table()));
        }
        let deg: eval::DegradationReport<f64> = eval::degradation(&clean, &noisy)?;
        table.push_str(&format!("== degradation\n{}", deg.to_table()));
        out["noisy"] = json!(noisy_metrics);
        out["degradation"] = json!(deg);
    }
    write_json(&a.out, &out)?;
    let table_path = a.out.with_extension("txt");
    write_file(&table_path, table.as_bytes())?;
    print!("{table}");

    let inputs: Vec<&Path> = a.clean.iter().chain(&a.noisy).map(PathBuf::as_path).collect();
    let settings = json!({"clean": a.clean, "noisy": a.noisy});
    stamp(ctx, &a.out, &settings, &inputs, json!({"table": table_path}))
}
