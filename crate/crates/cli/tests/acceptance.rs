//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use medentropy::analysis::{cluster_trends, ngram_entropy_table};
use medentropy::corpus::{enumerate_prefixes, oracle_entropy};
use medentropy::corpus::{
    split, synth_generate, Admission, Code, Corpus, GeneratorSpec, Split, SplitRatios,
};
use medentropy::entropy::{initial_entropy, prefix_entropies, uniform_entropy, InitialEntropyMode};
use medentropy::metrics::{evaluate, evaluate_predictions};
use medentropy::nncore::AdamHyper;
use medentropy::seq2seq::{
    checkpoint_bytes, train, Checkpoint, CorpusBinding, Example, ModelConfig, Seq2SeqModel,
    TrainOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

fn load_spec(name: &str) -> Result<GeneratorSpec, String> {
    GeneratorSpec::load(spec_path(name)).map_err(fail)
}

fn opts(epochs: usize, batch_size: usize, lr: f64) -> TrainOptions {
    TrainOptions {
        epochs,
        batch_size,
        hyper: AdamHyper::with_learning_rate(lr),
    }
}

fn model_for(corpus: &Corpus, embed: usize, hidden: usize) -> Result<Seq2SeqModel, String> {
    let mut config = ModelConfig::new(corpus.proc_vocab().len(), corpus.diag_vocab().len());
    config.embed_dim = embed;
    config.hidden_dim = hidden;
    Seq2SeqModel::new(config).map_err(fail)
}

fn initial_constants() -> Outcome {
    let procedures = uniform_entropy(6984);
    let diagnoses = uniform_entropy(6789);
    check(
        (procedures - 12.7698).abs() < 0.01
            && (procedures - 12.76).abs() < 0.01
            && (diagnoses - 12.7291).abs() < 0.01,
        format!("log2(6984) = {procedures:.6}, log2(6789) = {diagnoses:.6}"),
    )
}

fn gradient_checks() -> Outcome {
    // Four hand-made admissions over 8 procedure and 8 diagnosis codes
    // (vocabulary 12 with the reserved tokens).
    let examples = [
        (vec![4, 5, 6], vec![4, 7, 2]),
        (vec![7, 11], vec![9, 2]),
        (vec![8, 9, 10, 4], vec![11, 10, 5, 2]),
        (vec![6], vec![6, 2]),
    ]
    .map(|(procedures, targets)| Example {
        procedures,
        targets,
    });
    let mut worst = 0.0f64;
    let mut checked = 0;
    for layers in 1..=3 {
        for attention in [true, false] {
            for teacher_forcing in [true, false] {
                let mut config = ModelConfig::new(12, 12);
                config.embed_dim = 4;
                config.hidden_dim = 6;
                config.num_layers = layers;
                config.attention = attention;
                config.teacher_forcing = teacher_forcing;
                config.seed = 100 + layers as u64;
                let mut model = Seq2SeqModel::new(config).map_err(fail)?;
                let report = model
                    .grad_check(&examples, 1e-5, usize::MAX, 0)
                    .map_err(fail)?;
                if report.max_relative_error.is_nan() || report.max_relative_error >= 1e-6 {
                    return Err(format!(
                        "layers {layers}, attention {attention}, teacher forcing {teacher_forcing}: {report:?}"
                    ));
                }
                worst = worst.max(report.max_relative_error);
                checked += report.checked;
            }
        }
    }
    Ok(format!(
        "12 configurations, {checked} scalars, max relative error {worst:.2e}"
    ))
}

fn oracle_equivalence() -> Outcome {
    let spec = load_spec("four_conditions.json")?;
    let corpus = split(
        synth_generate(&spec, 2000).map_err(fail)?,
        SplitRatios::default(),
        42,
    )
    .map_err(fail)?;
    let (model, _) =
        train(model_for(&corpus, 16, 32)?, &corpus, &opts(200, 32, 1e-2)).map_err(fail)?;
    let initial = initial_entropy(InitialEntropyMode::default(), &corpus).map_err(fail)?;
    let prefixes = enumerate_prefixes(&spec, 3);
    let mut total = 0.0;
    for (prefix, _) in &prefixes {
        let steps = prefix_entropies(&model, prefix, corpus.proc_vocab(), initial).map_err(fail)?;
        let oracle = oracle_entropy(&spec, prefix).map_err(fail)?;
        total += (steps[steps.len() - 1] - oracle).abs();
    }
    let mean_error = total / prefixes.len() as f64;
    let first1 = evaluate(&model, &corpus, Some(Split::Test))
        .map_err(fail)?
        .first_n[&1];
    check(
        !prefixes.is_empty() && mean_error <= 0.15 && first1 >= 0.95,
        format!(
            "{} prefixes, mean |model - oracle| = {mean_error:.4} bits, First-1 = {first1:.4}",
            prefixes.len()
        ),
    )
}

fn mean_entropy_decline() -> Outcome {
    let spec = load_spec("five_step.json")?;
    let corpus = synth_generate(&spec, 2000).map_err(fail)?;
    let (model, _) =
        train(model_for(&corpus, 16, 32)?, &corpus, &opts(60, 32, 1e-2)).map_err(fail)?;
    let clusters =
        cluster_trends(&model, &corpus, 5, &[], InitialEntropyMode::default()).map_err(fail)?;
    let all = clusters.last().ok_or("no ALL cluster")?;
    let means: Vec<f64> = all
        .means()
        .into_iter()
        .collect::<Option<_>>()
        .ok_or("empty ALL cluster")?;
    let non_increasing = means.windows(2).all(|w| w[1] <= w[0] + 0.05);
    let trends =
        medentropy::analysis::all_trends(&model, &corpus, InitialEntropyMode::default(), Some(5))
            .map_err(fail)?;
    let non_monotone = trends.iter().filter(|t| t.is_non_monotone(0.0)).count();
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    check(
        all.count() >= 2000 && non_increasing && non_monotone >= 1,
        format!(
            "{} admissions, ALL means [{}], {non_monotone} non-monotone admissions",
            all.count(),
            shown.join(", ")
        ),
    )
}

fn metric_fixture() -> Outcome {
    let codes = |v: &[&str]| medentropy::corpus::codes(v).map_err(fail);
    let fixture = [
        (codes(&["a", "b", "c"])?, codes(&["b", "c", "d"])?),
        (codes(&["x"])?, codes(&["x"])?),
        (Vec::new(), codes(&["y", "z"])?),
    ];
    let single =
        evaluate_predictions([(fixture[0].0.as_slice(), fixture[0].1.as_slice())]).map_err(fail)?;
    let all = evaluate_predictions(fixture.iter().map(|(p, t)| (p.as_slice(), t.as_slice())))
        .map_err(fail)?;
    let expected = [
        (single.f1, 2.0 / 3.0),
        (single.jaccard, 0.5),
        (single.first_n[&3], 2.0 / 3.0),
        (all.f1, 5.0 / 9.0),
        (all.jaccard, 0.5),
        (all.first_n[&1], 1.0 / 3.0),
        (all.first_n[&2], 0.5),
        (all.first_n[&3], 5.0 / 9.0),
    ];
    let worst = expected
        .iter()
        .map(|(got, want)| (got - want).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 1e-12,
        format!("{} values, max deviation {worst:.1e}", expected.len()),
    )
}

/// A synthesized corpus with a small trained model, written by the CLI.
struct Workdir {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn cli(root: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_medentropy"))
        .current_dir(root)
        .args(args)
        .output()
        .map_err(fail)?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    String::from_utf8(out.stdout).map_err(fail)
}

fn workdir() -> Result<Workdir, String> {
    let dir = tempfile::tempdir().map_err(fail)?;
    let root = dir.path().to_path_buf();
    let spec = spec_path("five_step.json");
    cli(
        &root,
        &["synth", spec.to_str().ok_or("path")?, "300", "corpus.jsonl"],
    )?;
    cli(
        &root,
        &[
            "--embed-dim",
            "8",
            "--hidden-dim",
            "12",
            "--epochs",
            "3",
            "--lr",
            "1e-2",
            "train",
            "corpus.jsonl",
            "model.ckpt",
        ],
    )?;
    Ok(Workdir { _dir: dir, root })
}

fn determinism(work: &Workdir) -> Outcome {
    // Library: same seed, same bytes; save, load, identical distributions.
    let spec = load_spec("four_conditions.json")?;
    let corpus = synth_generate(&spec, 200).map_err(fail)?;
    let binding = CorpusBinding::for_corpus(&corpus, 1);
    let run = || -> Result<(Seq2SeqModel, Vec<u8>), String> {
        let (model, _) =
            train(model_for(&corpus, 8, 12)?, &corpus, &opts(3, 16, 1e-2)).map_err(fail)?;
        let bytes = checkpoint_bytes(&model, &binding).map_err(fail)?;
        Ok((model, bytes))
    };
    let (model, first) = run()?;
    let (_, second) = run()?;
    if first != second {
        return Err("two seeded training runs produced different checkpoints".into());
    }
    let loaded = Checkpoint::from_bytes(&first).map_err(fail)?.model;
    let bits = |m: &Seq2SeqModel, a: &Admission| -> Result<Vec<u64>, String> {
        let d = m
            .first_distribution(&corpus.proc_vocab().encode(&a.procedures))
            .map_err(fail)?;
        Ok(d.probs().iter().map(|p| p.to_bits()).collect())
    };
    for adm in corpus.admissions() {
        if bits(&model, adm)? != bits(&loaded, adm)? {
            return Err(format!("distribution differs after reload for {}", adm.id));
        }
    }

    // CLI: every CSV output reproduced by its manifest.
    let root = &work.root;
    let outputs = ["trends.csv", "ngram.csv", "clusters.csv"];
    cli(
        root,
        &[
            "trend",
            "model.ckpt",
            "corpus.jsonl",
            "--all",
            "--out",
            outputs[0],
        ],
    )?;
    cli(
        root,
        &[
            "ngram",
            "model.ckpt",
            "corpus.jsonl",
            "--n",
            "2",
            "--top",
            "20",
            "--out",
            outputs[1],
        ],
    )?;
    cli(
        root,
        &[
            "cluster",
            "model.ckpt",
            "corpus.jsonl",
            "--length",
            "5",
            "--keys",
            "dA,dB,dC",
            "--out",
            outputs[2],
        ],
    )?;
    for name in outputs.iter().chain(["model.ckpt"].iter()) {
        cli(
            root,
            &[
                "rerun",
                &format!("{name}.manifest.json"),
                "--out-dir",
                "rerun",
            ],
        )?;
        let a = std::fs::read(root.join(name)).map_err(fail)?;
        let b = std::fs::read(root.join("rerun").join(name)).map_err(fail)?;
        if a != b {
            return Err(format!("rerun of {name} is not byte-identical"));
        }
    }
    Ok(format!(
        "{} admissions bitwise identical after reload; model.ckpt and 3 CSV outputs reproduced byte-for-byte",
        corpus.len()
    ))
}

fn ngram_oracle() -> Outcome {
    let spec = load_spec("five_step.json")?;
    let corpus = synth_generate(&spec, 1000).map_err(fail)?;
    let model = model_for(&corpus, 4, 6)?;
    let mut detail = Vec::new();
    for n in 1..=3 {
        let mut recount: BTreeMap<String, usize> = BTreeMap::new();
        for adm in corpus.admissions() {
            if adm.procedures.len() >= n {
                let key: Vec<&str> = adm.procedures[..n].iter().map(Code::as_str).collect();
                *recount.entry(key.join(" ")).or_insert(0) += 1;
            }
        }
        let table = ngram_entropy_table(
            &model,
            &corpus,
            n,
            usize::MAX,
            InitialEntropyMode::default(),
        )
        .map_err(fail)?;
        let counted: BTreeMap<String, usize> = table
            .rows
            .iter()
            .map(|r| {
                (
                    r.prefix
                        .iter()
                        .map(Code::as_str)
                        .collect::<Vec<_>>()
                        .join(" "),
                    r.cases,
                )
            })
            .collect();
        if counted != recount || counted.len() != table.rows.len() {
            return Err(format!("N = {n}: table counts differ from the recount"));
        }
        if table.rows.windows(2).any(|w| w[0].cases < w[1].cases) {
            return Err(format!("N = {n}: rows not ordered by count"));
        }
        detail.push(format!("N={n}: {} prefixes", recount.len()));
    }
    Ok(detail.join(", "))
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(root: &Path) -> Result<Server, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_medentropy"))
        .current_dir(root)
        .args([
            "serve",
            "model.ckpt",
            "corpus.jsonl",
            "--bind",
            "127.0.0.1:0",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(fail)?;
    let stdout = child.stdout.take().ok_or("no stdout")?;
    let mut server = Server {
        child,
        base: String::new(),
    };
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).map_err(fail)?;
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or(format!("unexpected banner {line:?}"))?;
    server.base = url.to_string();
    Ok(server)
}

fn service_contract(work: &Workdir) -> Outcome {
    let root = &work.root;
    let csv = cli(root, &["trend", "model.ckpt", "corpus.jsonl", "--all"])?;
    // admission id -> [(procedure, entropy field)]
    let mut trends: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(format!("malformed trend row {line:?}"));
        }
        trends
            .entry(fields[0].to_string())
            .or_default()
            .push((fields[2].to_string(), fields[3].to_string()));
    }
    let ids: Vec<&String> = trends.keys().collect();
    let server = start_server(root)?;
    let runtime = tokio::runtime::Runtime::new().map_err(fail)?;
    let client = reqwest::Client::new();
    let predict = |body: Value| {
        let client = client.clone();
        let url = format!("{}/predict", server.base);
        async move {
            let resp = client.post(url).json(&body).send().await.map_err(fail)?;
            if !resp.status().is_success() {
                return Err(format!("status {}", resp.status()));
            }
            resp.text().await.map_err(fail)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let rows = &trends[ids[rng.gen_range(0..ids.len())]];
        let k = rng.gen_range(1..rows.len());
        let prefix: Vec<&str> = rows[1..=k].iter().map(|(p, _)| p.as_str()).collect();
        let text = runtime.block_on(predict(json!({ "procedures": prefix })))?;
        let body: Value = serde_json::from_str(&text).map_err(fail)?;
        let served: Vec<String> = body["step_entropies"]
            .as_array()
            .ok_or("no step_entropies")?
            .iter()
            .map(|v| {
                v.as_f64()
                    .map(|x| x.to_string())
                    .ok_or("non-numeric entropy")
            })
            .collect::<Result<_, _>>()?;
        let expected: Vec<String> = rows[..=k].iter().map(|(_, e)| e.clone()).collect();
        if served != expected {
            return Err(format!(
                "prefix {prefix:?}: served {served:?}, CLI {expected:?}"
            ));
        }
    }

    let bodies = runtime.block_on(async {
        let mut handles = Vec::new();
        for _ in 0..32 {
            let body = json!({ "procedures": trends[ids[0]][1..].iter().map(|(p, _)| p.clone()).collect::<Vec<_>>() });
            handles.push(tokio::spawn(predict(body)));
        }
        let mut out = Vec::new();
        for h in handles {
            out.push(h.await.map_err(fail)??);
        }
        Ok::<_, String>(out)
    })?;
    check(
        bodies.iter().all(|b| *b == bodies[0]),
        "20 random prefixes match the CLI trend field-for-field; 32 parallel requests returned identical bodies".into(),
    )
}

fn report(
    id: usize,
    name: &str,
    limit: Option<Duration>,
    run: &mut dyn FnMut() -> Outcome,
) -> bool {
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(d), Some(limit)) if elapsed > limit => {
            Err(format!("{d}; exceeded {}s", limit.as_secs()))
        }
        (o, _) => o,
    };
    let passed = outcome.is_ok();
    let (status, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!(
        "{status} [{id}] {name} ({:.2}s): {detail}",
        elapsed.as_secs_f64()
    );
    passed
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let mut results = vec![
        report(
            1,
            "initial-entropy constants",
            secs(1),
            &mut initial_constants,
        ),
        report(2, "gradient checks", secs(120), &mut gradient_checks),
        report(3, "oracle equivalence", secs(600), &mut oracle_equivalence),
        report(
            4,
            "mean entropy decline",
            secs(300),
            &mut mean_entropy_decline,
        ),
        report(5, "metric fixture", None, &mut metric_fixture),
    ];
    match workdir() {
        Ok(work) => {
            results.push(report(6, "determinism and persistence", None, &mut || {
                determinism(&work)
            }));
            results.push(report(7, "n-gram counts", None, &mut ngram_oracle));
            results.push(report(8, "service contract", None, &mut || {
                service_contract(&work)
            }));
        }
        Err(e) => {
            for (id, name) in [(6, "determinism and persistence"), (8, "service contract")] {
                println!("FAIL [{id}] {name}: setup failed: {e}");
                results.push(false);
            }
            results.push(report(7, "n-gram counts", None, &mut ngram_oracle));
        }
    }
    if results.iter().all(|&ok| ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
