//! Acceptance suite. Each criterion runs in isolation and reports one
//! PASS/FAIL line on stdout; the test fails if any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use flipbench::bench::{generate_benchmark, Benchmark, Category, GenerationConfig, QuestionInstance};
use flipbench::causal::{derive_label, query_for, DatasetKind, EventTriple, Label, Polarity, QueryKind, StructureSpec};
use flipbench::eval::{self, parse_answer, run_eval, Condition, EvalOptions, EvalRecord, GoldEcho, PairedLabel, Parsed};
use flipbench::export::{self, assemble_sample, inject_noisy_prefix, ExportConfig, MaskSchedule, Mode, NoisyPrefixSpec};
use flipbench::io::{read_jsonl, write_jsonl, FORMAT_VERSION};
use flipbench::num::{Ratio, SignedRatio};
use flipbench::skew::{count_skew, neighbor_skew, neighbor_skew_ids, EmbeddingTable};
use flipbench::split::pairwise_split;
use flipbench::templates::TemplateSet;
use flipbench::triples::PooledTriple;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn report(name: &str, budget: Option<Duration>, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check))
        .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
    let elapsed = start.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:?}, budget {b:?}")),
        (o, _) => o,
    };
    let line = match &outcome {
        Ok(detail) => format!("PASS  {name}: {detail} ({:.2}s)", elapsed.as_secs_f64()),
        Err(why) => format!("FAIL  {name}: {why} ({:.2}s)", elapsed.as_secs_f64()),
    };
    // Written to the real stdout so the line shows even when output is captured.
    let _ = writeln!(std::io::stdout().lock(), "{line}");
    outcome.is_ok()
}

/// `n` triples per pool with unique, unrelated phrases.
fn fixture_triples(n: usize) -> Vec<PooledTriple> {
    let mut out = Vec::with_capacity(2 * n);
    for pool in Polarity::ALL {
        for i in 0..n {
            let id = format!("{}{i:04}", pool.as_str());
            out.push(PooledTriple {
                triple: EventTriple::new(
                    id.clone(),
                    format!("rising output {id}"),
                    format!("falling demand {id}"),
                    format!("regional context {id}"),
                )
                .unwrap(),
                pool,
            });
        }
    }
    out
}

fn bench(kind: DatasetKind, ppc: usize, seed: u64) -> Benchmark {
    let cfg = GenerationConfig::new(kind, ppc, seed);
    generate_benchmark(&cfg, &fixture_triples(2 * ppc), &TemplateSet::builtin()).unwrap()
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}

// Stated labels per structure and question, transcribed by hand:
// base structures answer question (i) No and question (ii) Yes; the
// opposite structures flip both.
const TRUTH: [(DatasetKind, Polarity, QueryKind, Label); 12] = {
    use DatasetKind::*;
    use Label::*;
    use Polarity::*;
    use QueryKind::*;
    [
        (Confounder, Base, Q1, No),
        (Confounder, Base, Q2, Yes),
        (Confounder, Opposite, Q1, Yes),
        (Confounder, Opposite, Q2, No),
        (Chain, Base, Q1, No),
        (Chain, Base, Q2, Yes),
        (Chain, Opposite, Q1, Yes),
        (Chain, Opposite, Q2, No),
        (Collider, Base, Q1, No),
        (Collider, Base, Q2, Yes),
        (Collider, Opposite, Q1, Yes),
        (Collider, Opposite, Q2, No),
    ]
};

fn label_oracle() -> Check {
    let mut seen = HashSet::new();
    for (kind, pol, q, want) in TRUTH {
        let got = derive_label(StructureSpec::new(kind, pol), &query_for(kind, q)).map_err(|e| e.to_string())?;
        ensure!(got == want, "{kind}/{pol}/{q}: got {got}, stated {want}");
        seen.insert((kind, pol, q));
    }
    ensure!(seen.len() == 12, "truth table covers {} combinations", seen.len());
    Ok("12/12 labels match".into())
}

fn pair_flip() -> Check {
    let mut total = 0;
    for kind in DatasetKind::ALL {
        let b = bench(kind, 250, 11);
        ensure!(b.pairs.len() == 1000, "{kind}: {} pairs", b.pairs.len());
        for p in &b.pairs {
            let (a, c) = (&p.q1, &p.q2);
            ensure!(a.label != c.label, "{}: labels do not flip", p.pair_id);
            ensure!(a.triple == c.triple, "{}: triples differ", p.pair_id);
            ensure!(a.polarity == c.polarity && a.template_family == c.template_family, "{}: metadata differs", p.pair_id);
            ensure!((a.query_kind, c.query_kind) == (QueryKind::Q1, QueryKind::Q2), "{}: query kinds", p.pair_id);
        }
        total += b.pairs.len();
    }
    Ok(format!("{total} pairs flip across 3 datasets"))
}

fn balance_and_split() -> Check {
    for kind in DatasetKind::ALL {
        let b = bench(kind, 250, 3);
        let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
        for p in &b.pairs {
            *counts.entry(p.q1.category).or_default() += 1;
        }
        ensure!(counts.len() == 4 && counts.values().all(|&c| c == 250), "{kind}: {counts:?}");
        for seed in [0u64, 1, 99] {
            let s = pairwise_split(&b, seed).map_err(|e| e.to_string())?;
            let mut members: HashMap<&str, (usize, usize)> = HashMap::new();
            for q in &s.train {
                members.entry(&q.pair_id).or_default().0 += 1;
            }
            for q in &s.test {
                members.entry(&q.pair_id).or_default().1 += 1;
            }
            ensure!(members.len() == b.pairs.len(), "{kind}: pairs missing from split");
            ensure!(members.values().all(|&m| m == (1, 1)), "{kind}: a pair is not split one/one");
            let q1 = s.train.iter().filter(|q| q.query_kind == QueryKind::Q1).count();
            let q2 = s.train.len() - q1;
            ensure!(q1 == q2, "{kind} seed {seed}: {q1} Q1 vs {q2} Q2 in train");
            for c in Category::ALL {
                let k1 = s.train.iter().filter(|q| q.category == c && q.query_kind == QueryKind::Q1).count();
                let k2 = s.train.iter().filter(|q| q.category == c && q.query_kind == QueryKind::Q2).count();
                ensure!(k1 == k2, "{kind} {c}: {k1} vs {k2}");
            }
        }
    }
    Ok("BD=BA=OD=OA=250; one member per pair per side; Q1=Q2 in train".into())
}

fn adversarial_split() -> Check {
    let rt = runtime();
    let opts = EvalOptions::default();
    let mut runs = 0;
    for kind in DatasetKind::ALL {
        let b = bench(kind, 20, 5);
        for seed in [1u64, 2, 3] {
            let s = pairwise_split(&b, seed).map_err(|e| e.to_string())?;
            let paired = rt
                .block_on(run_eval(&s.test, &PairedLabel::from_split(&s), &opts, None))
                .map_err(|e| e.to_string())?;
            let gold = rt
                .block_on(run_eval(&s.test, &GoldEcho::new(&s.test), &opts, None))
                .map_err(|e| e.to_string())?;
            let pm = eval::score::<f64>(&paired).map_err(|e| e.to_string())?;
            let gm = eval::score::<f64>(&gold).map_err(|e| e.to_string())?;
            ensure!(pm.accuracy() == 0.0, "{kind} seed {seed}: paired-label accuracy {}", pm.accuracy());
            ensure!(gm.accuracy() == 1.0, "{kind} seed {seed}: gold-echo accuracy {}", gm.accuracy());
            runs += 1;
        }
    }
    Ok(format!("paired-label 0.000 and gold-echo 1.000 on {runs} splits"))
}

/// 1000 records: `correct` right answers, `valid - correct` wrong ones, the rest unparseable.
fn synthetic_records(correct: usize, valid: usize) -> Vec<EvalRecord> {
    (0..1000)
        .map(|i| {
            let parsed = if i < correct {
                Parsed::Yes
            } else if i < valid {
                Parsed::No
            } else {
                Parsed::Invalid
            };
            EvalRecord {
                format_version: FORMAT_VERSION,
                question_id: format!("q{i:04}"),
                raw_completion: String::new(),
                parsed,
                gold: Label::Yes,
                correct: parsed == Parsed::Yes,
                dataset_kind: DatasetKind::Confounder,
                category: Category::ALL[i % 4],
                query_kind: if i % 2 == 0 { QueryKind::Q1 } else { QueryKind::Q2 },
                condition: Condition::Clean,
                strategy: None,
                error: None,
            }
        })
        .collect()
}

fn metric_golden() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    // Table rows: correct, valid, reported accuracy.
    let rows = [(529, 1000, 0.529), (524, 1000, 0.524), (892, 987, 0.892), (900, 997, 0.900)];
    for (correct, valid, acc) in rows {
        let path = dir.path().join(format!("r{correct}.jsonl"));
        write_jsonl(&path, synthetic_records(correct, valid)).map_err(|e| e.to_string())?;
        let back: Vec<EvalRecord> = read_jsonl(&path).map_err(|e| e.to_string())?;
        let m = eval::score::<f64>(&back).map_err(|e| e.to_string())?;
        ensure!(m.accuracy() == acc, "{correct}: accuracy {} != {acc}", m.accuracy());
        ensure!(m.accuracy_ratio() == Ratio::new(correct as u64, 1000), "{correct}: exact ratio");
        ensure!(m.overall.correct == correct as u64 && m.overall.total == 1000, "{correct}: counts");
        ensure!(m.overall.valid == valid as u64, "{correct}: valid {} != {valid}", m.overall.valid);
        let f32m = eval::score::<f32>(&back).map_err(|e| e.to_string())?;
        ensure!(f32m.accuracy() == acc as f32, "{correct}: f32 accuracy");
    }
    let clean = eval::score::<f64>(&synthetic_records(892, 987)).unwrap();
    let noisy = eval::score::<f64>(&synthetic_records(699, 990)).unwrap();
    let d = eval::accuracy_delta(&clean, &noisy);
    ensure!(d == SignedRatio::new(193, 1000), "delta {d}");
    Ok("0.529 0.524 0.892 0.900; valid 987/1000 and 997/1000; delta 193/1000".into())
}

fn parser_conformance() -> Check {
    use Parsed::*;
    let cases: [(&str, Parsed); 20] = [
        ("Yes", Yes),
        ("No", No),
        ("Yes.", Invalid),
        ("no!", Invalid),
        ("", Invalid),
        ("   ", Invalid),
        ("yes", Invalid),
        ("NO", Invalid),
        ("  Yes  ", Yes),
        ("\nNo\n\n", No),
        ("Reasoning goes here, therefore\nYes", Yes),
        ("Reasoning goes here, therefore\nNo", No),
        ("therefore\nYes\n", Yes),
        ("Yes\nNo", No),
        ("No\nYes", Yes),
        ("Yes No", Invalid),
        ("The answer is Yes", Invalid),
        ("Yes\nmaybe", Invalid),
        ("\"Yes\"", Invalid),
        ("Yes!", Invalid),
    ];
    for (input, want) in cases {
        let got = parse_answer(input);
        ensure!(got == want, "{input:?} parsed as {got:?}, expected {want:?}");
    }
    Ok("20/20 cases".into())
}

fn mask_schedule() -> Check {
    let linear = MaskSchedule::<f64>::linear(100, 1.0).unwrap();
    ensure!(linear.mask_fraction(50) == 0.5, "rho(50) = {}", linear.mask_fraction(50));
    for t in 0..200u64 {
        ensure!(linear.mask_fraction(t) <= linear.mask_fraction(t + 1), "sweep not monotone at {t}");
    }

    let strategy = (
        any::<bool>(),
        1u64..5000,
        0.0f64..=1.0,
        1u32..12,
        0u64..10_000,
        0u64..10_000,
        0usize..300,
    );
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |(stepwise, ramp, terminal, stages, a, b, len)| {
            let s = if stepwise {
                MaskSchedule::<f64>::stepwise(ramp, terminal, stages).unwrap()
            } else {
                MaskSchedule::<f64>::linear(ramp, terminal).unwrap()
            };
            let (t1, t2) = (a.min(b), a.max(b));
            prop_assert_eq!(s.mask_fraction(0), 0.0);
            prop_assert_eq!(s.mask_fraction(ramp), terminal);
            prop_assert_eq!(s.mask_fraction(ramp + t2), terminal);
            prop_assert!(s.mask_fraction(t1) <= s.mask_fraction(t2));
            prop_assert!((0.0..=terminal).contains(&s.mask_fraction(t1)));
            prop_assert!(s.masked_tokens(t1, len) <= s.masked_tokens(t2, len));
            let (m1, m2) = (s.supervision_mask(t1, len), s.supervision_mask(t2, len));
            // Once a position loses supervision it never gets it back.
            prop_assert!(m1.iter().zip(&m2).all(|(x, y)| *x || !*y));
            if terminal == 1.0 {
                prop_assert_eq!(s.masked_tokens(ramp, len), len);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("rho(0)=0, rho(T_ramp)=terminal, monotone over 1000 random schedules".into())
}

/// Independent O(n^2) neighbour counting: similarity matrix, then k rounds
/// of picking the best remaining candidate, ties to the smaller id.
fn brute_neighbors(ids: &[String], vecs: &HashMap<String, Vec<f64>>, k: usize) -> BTreeMap<String, usize> {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na.sqrt() * nb.sqrt())
        }
    };
    let mut hits: BTreeMap<String, usize> = ids.iter().map(|i| (i.clone(), 0)).collect();
    for a in ids {
        let mut taken: HashSet<&String> = HashSet::new();
        for _ in 0..k.min(ids.len() - 1) {
            let mut best: Option<(&String, f64)> = None;
            for b in ids {
                if b == a || taken.contains(b) {
                    continue;
                }
                let s = cos(&vecs[a], &vecs[b]);
                best = match best {
                    Some((bid, bs)) if bs > s || (bs == s && bid < b) => Some((bid, bs)),
                    _ => Some((b, s)),
                };
            }
            let (b, _) = best.unwrap();
            taken.insert(b);
            *hits.get_mut(b).unwrap() += 1;
        }
    }
    hits
}

/// Benchmark whose triples reuse a small vocabulary so phrases repeat.
fn skewed_bench(seed: u64) -> Benchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ["storms", "layoffs", "festivals", "drought", "elections", "outages", "strikes"];
    let mut triples = Vec::new();
    for pool in Polarity::ALL {
        for i in 0..6 {
            let mut pick = vocab.to_vec();
            let mut phrase = || pick.swap_remove(rng.random_range(0..pick.len())).to_string();
            let (x, y, z) = (phrase(), phrase(), phrase());
            triples.push(PooledTriple {
                triple: EventTriple::new(format!("{}{i}", pool.as_str()), x, y, z).unwrap(),
                pool,
            });
        }
    }
    let cfg = GenerationConfig::new(DatasetKind::Collider, 3, seed);
    generate_benchmark(&cfg, &triples, &TemplateSet::builtin()).unwrap()
}

fn skew_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fixtures = 0;
    for n in [2usize, 5, 17, 33, 50] {
        for k in [1usize, 3, 5, 60] {
            let ids: Vec<String> = (0..n).map(|i| format!("q{:03}", (i * 7) % n)).collect();
            let mut vecs = HashMap::new();
            let mut table = EmbeddingTable::<f64>::new("fixture");
            for (i, id) in ids.iter().enumerate() {
                // Small integer grid, some exact duplicates and a zero vector, so ties occur.
                let v: Vec<f64> = if i % 5 == 4 {
                    vecs.get(&ids[i - 1]).cloned().unwrap()
                } else if i == 3 {
                    vec![0.0; 4]
                } else {
                    (0..4).map(|_| rng.random_range(-2i32..=2) as f64).collect()
                };
                vecs.insert(id.clone(), v.clone());
                table.insert(id.clone(), v).unwrap();
            }
            let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let got = neighbor_skew_ids(&id_refs, &table, k).map_err(|e| e.to_string())?;
            let want = brute_neighbors(&ids, &vecs, k);
            ensure!(got == want, "n={n} k={k}: neighbour counts differ");
            fixtures += 1;
        }
    }

    // Report ordering and categories on a real benchmark.
    let b = skewed_bench(1);
    let qs: Vec<&QuestionInstance> = b.questions().collect();
    ensure!(qs.len() <= 50, "fixture too large");
    let table = EmbeddingTable::<f64>::from_rows(
        "hash",
        qs.iter().map(|q| flipbench::skew::embed::EmbeddingRow {
            id: q.id.clone(),
            vector: flipbench::skew::embed::HashingEmbedder { dim: 16 }.embed_one(&q.question_text),
        }),
    )
    .unwrap();
    let report = neighbor_skew(qs.iter().copied(), &table, 5).map_err(|e| e.to_string())?;
    let ids: Vec<String> = qs.iter().map(|q| q.id.clone()).collect();
    let vecs: HashMap<String, Vec<f64>> =
        ids.iter().map(|id| (id.clone(), table.get(id).unwrap().to_vec())).collect();
    let mut want: Vec<(String, usize)> = brute_neighbors(&ids, &vecs, 5).into_iter().filter(|(_, c)| *c > 0).collect();
    want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let got: Vec<(String, usize)> = report.offenders.iter().map(|o| (o.item.clone(), o.occurrences)).collect();
    ensure!(got == want, "neighbour report differs from oracle");

    // Count audit against a direct tally.
    for seed in 0..20u64 {
        let b = skewed_bench(seed);
        for threshold in [0.25, 0.5, 0.6, 0.75, 1.0] {
            let report = count_skew(b.questions(), threshold).map_err(|e| e.to_string())?;
            let mut want: Vec<(String, f64, usize)> = Vec::new();
            let phrases: HashSet<&str> = b.questions().flat_map(|q| [q.triple.x.as_str(), q.triple.y.as_str(), q.triple.z.as_str()]).collect();
            for p in phrases {
                let mut best = 0.0f64;
                let mut occurrences = 0;
                for label in [Label::Yes, Label::No] {
                    let with = |c: Option<Category>| {
                        b.questions()
                            .filter(|q| q.label == label && c.is_none_or(|c| q.category == c))
                            .map(|q| [&q.triple.x, &q.triple.y, &q.triple.z].iter().filter(|s| s.as_str() == p).count())
                            .sum::<usize>()
                    };
                    let total = with(None);
                    occurrences += total;
                    if total > 0 {
                        for c in Category::ALL {
                            best = best.max(with(Some(c)) as f64 / total as f64);
                        }
                    }
                }
                if best > threshold {
                    want.push((p.to_string(), best, occurrences));
                }
            }
            want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
            let got: Vec<(String, f64, usize)> =
                report.offenders.iter().map(|o| (o.item.clone(), o.score, o.occurrences)).collect();
            ensure!(got == want, "seed {seed} threshold {threshold}: {got:?} vs {want:?}");
        }
    }
    Ok(format!("{fixtures} neighbour fixtures and 100 count audits match brute force"))
}

fn noisy_prefix_integrity() -> Check {
    let b = bench(DatasetKind::Chain, 13, 8);
    let qs: Vec<&QuestionInstance> = b.questions().take(100).collect();
    ensure!(qs.len() == 100, "fixture has {} questions", qs.len());
    let spec = NoisyPrefixSpec::default();
    ensure!(spec.prefix_text.matches(". ").count() + 1 == 3, "default prefix is not three sentences");
    for mode in [Mode::ExplicitCot, Mode::ImplicitCot] {
        for q in &qs {
            let clean = assemble_sample(q, mode).map_err(|e| e.to_string())?;
            let noisy = inject_noisy_prefix(clean.clone(), &spec).map_err(|e| e.to_string())?;
            let text = |s: &export::TrainingSample, span: export::Span| span.slice(&s.full_text).to_string();
            ensure!(text(&noisy, noisy.question_span) == text(&clean, clean.question_span), "{}: question changed", q.id);
            ensure!(text(&noisy, noisy.answer_span) == text(&clean, clean.answer_span), "{}: answer changed", q.id);
            ensure!(noisy.label == clean.label, "{}: label changed", q.id);
            ensure!(noisy.full_text.matches(&spec.prefix_text).count() == 1, "{}: prefix count", q.id);
            let r = text(&noisy, noisy.reasoning_span.unwrap());
            ensure!(r.starts_with(&spec.prefix_text), "{}: prefix not at reasoning start", q.id);
            ensure!(r.ends_with(&q.reasoning_text), "{}: reasoning not preserved", q.id);
        }
    }
    Ok("100 samples x 2 modes keep question, answer and label; prefix once at reasoning start".into())
}

fn pipeline_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    // 26 pairs per category: the closest balanced size to 100 pairs.
    let cfg = GenerationConfig::new(DatasetKind::Confounder, 26, 42);
    let b = generate_benchmark(&cfg, &fixture_triples(52), &TemplateSet::builtin()).unwrap();
    let bench_path = dir.join("bench.jsonl");
    b.write(&bench_path).unwrap();
    let s = pairwise_split(&b, 42).unwrap();
    std::fs::write(dir.join("train.jsonl"), s.train_jsonl()).unwrap();
    std::fs::write(dir.join("test.jsonl"), s.test_jsonl()).unwrap();
    for mode in [Mode::NoCot, Mode::ExplicitCot, Mode::ImplicitCot] {
        let config = ExportConfig {
            mode,
            schedule: MaskSchedule::<f64>::linear(40, 1.0).unwrap(),
            noisy_prefix: (mode != Mode::NoCot).then(NoisyPrefixSpec::default),
        };
        let records = export::export_training(&s.train, &config).unwrap();
        write_jsonl(&dir.join(format!("export-{mode}.jsonl")), &records).unwrap();
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (fa, fb) = (pipeline_bytes(a.path()), pipeline_bytes(b.path()));
    ensure!(fa.len() == 6, "expected 6 artifacts, got {}", fa.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        ensure!(na == nb && ba == bb, "{na} differs between runs");
        ensure!(!ba.is_empty(), "{na} is empty");
    }
    Ok("104 pairs: benchmark, split and 3 exports byte-identical".into())
}

#[test]
fn acceptance() {
    let results = [
        report("label oracle exactness", Some(Duration::from_secs(1)), label_oracle),
        report("pair-flip universality", Some(Duration::from_secs(5)), pair_flip),
        report("balance and split", Some(Duration::from_secs(5)), balance_and_split),
        report("adversarial split", Some(Duration::from_secs(10)), adversarial_split),
        report("metric arithmetic golden values", None, metric_golden),
        report("parser conformance", None, parser_conformance),
        report("mask schedule contract", None, mask_schedule),
        report("skew audit oracle equivalence", Some(Duration::from_secs(10)), skew_oracles),
        report("noisy-prefix integrity", None, noisy_prefix_integrity),
        report("determinism", Some(Duration::from_secs(30)), determinism),
    ];
    let passed = results.iter().filter(|r| **r).count();
    let _ = writeln!(std::io::stdout().lock(), "acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
