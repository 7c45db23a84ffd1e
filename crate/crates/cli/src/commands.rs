use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Subcommand, ValueEnum};
use medentropy::analysis::{
    all_trends, cluster_trends, ngram_entropy_table, render_ngram_markdown, render_table,
    ExportFormat, Table,
};
use medentropy::corpus::{
    read_jsonl, split, synth_generate, write_jsonl, Admission, Code, Corpus, GeneratorSpec, Split,
};
use medentropy::entropy::entropy_trend;
use medentropy::metrics::evaluate;
use medentropy::seq2seq::{
    checkpoint_bytes, hex, train_with, Checkpoint, CorpusBinding, Seq2SeqModel,
};
use medentropy::util::atomic_write;
use medentropy::{Error, Result};
use medentropy_service::{router, serve, shutdown_signal, AppState, Engine};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::{manifest_path, FileRecord, Manifest, MANIFEST_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    /// Presentation table (n-gram only).
    Markdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::All => None,
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name")]
pub enum Command {
    /// Generate a synthetic corpus (JSONL) from a generator spec.
    Synth {
        spec: PathBuf,
        n: usize,
        out: PathBuf,
    },
    /// Train a model and save a checkpoint; prints the loss of every epoch.
    Train {
        corpus: PathBuf,
        checkpoint: PathBuf,
    },
    /// Greedy-decode a split and print metrics as JSON.
    Eval {
        corpus: PathBuf,
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Entropy trend of one admission, or of every admission with --all.
    Trend {
        checkpoint: PathBuf,
        corpus: PathBuf,
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        admission_id: Option<String>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Entropy after each procedure of the most frequent first-N prefixes.
    Ngram {
        checkpoint: PathBuf,
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Mean and spread of trends of length-M admissions per primary diagnosis.
    Cluster {
        checkpoint: PathBuf,
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        length: usize,
        /// Comma-separated primary diagnosis codes; an ALL cluster is always added.
        #[arg(long, value_delimiter = ',')]
        keys: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Start the HTTP inference service.
    Serve {
        checkpoint: PathBuf,
        corpus: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Directory of static files served under /ui/.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Repeat the run recorded in a manifest and verify its outputs.
    Rerun {
        manifest: PathBuf,
        /// Write the outputs here instead of their original locations.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

impl Command {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Synth { spec, out, .. } => vec![spec, out],
            Command::Train { corpus, checkpoint } => vec![corpus, checkpoint],
            Command::Eval {
                corpus,
                checkpoint,
                out,
                ..
            } => [corpus, checkpoint]
                .into_iter()
                .chain(out.as_mut())
                .collect(),
            Command::Trend {
                checkpoint,
                corpus,
                out,
                ..
            }
            | Command::Ngram {
                checkpoint,
                corpus,
                out,
                ..
            }
            | Command::Cluster {
                checkpoint,
                corpus,
                out,
                ..
            } => [checkpoint, corpus]
                .into_iter()
                .chain(out.as_mut())
                .collect(),
            Command::Serve {
                checkpoint,
                corpus,
                ui_dir,
                ..
            } => [checkpoint, corpus]
                .into_iter()
                .chain(ui_dir.as_mut())
                .collect(),
            Command::Rerun { manifest, out_dir } => {
                [manifest].into_iter().chain(out_dir.as_mut()).collect()
            }
        }
    }

    fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Synth { out, .. } => vec![out],
            Command::Train { checkpoint, .. } => vec![checkpoint],
            Command::Eval { out, .. }
            | Command::Trend { out, .. }
            | Command::Ngram { out, .. }
            | Command::Cluster { out, .. } => out.as_mut().into_iter().collect(),
            Command::Serve { .. } | Command::Rerun { .. } => Vec::new(),
        }
    }

    /// Makes every path absolute so a manifest can be replayed from any
    /// working directory.
    fn absolutize(&mut self) -> Result<()> {
        for p in self.paths_mut() {
            *p = std::path::absolute(&*p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
        }
        Ok(())
    }
}

/// Inputs read and outputs written by one command.
#[derive(Default)]
struct Run {
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    corpus_fingerprint: Option<String>,
}

impl Run {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.inputs.push(FileRecord::of(path, &bytes));
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        atomic_write(path, bytes)?;
        self.outputs.push(FileRecord::of(path, bytes));
        Ok(())
    }

    /// Writes to `out` when given, otherwise to stdout.
    fn emit(&mut self, out: Option<&Path>, text: &str) -> Result<()> {
        match out {
            Some(path) => self.write(path, text.as_bytes()),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|source| Error::Io {
                        path: "<stdout>".into(),
                        source,
                    })
            }
        }
    }

    fn admissions(&mut self, path: &Path) -> Result<Vec<Admission>> {
        let bytes = self.read(path)?;
        let (admissions, summary) = read_jsonl(bytes.as_slice())?;
        if summary.rejected_empty > 0 {
            log::warn!(
                "{}: skipped {} admissions with an empty list",
                path.display(),
                summary.rejected_empty
            );
        }
        Ok(admissions)
    }

    fn checkpoint(&mut self, path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&self.read(path)?)
    }

    /// Checkpoint plus the corpus rebuilt the way it was at training time.
    fn bound(&mut self, checkpoint: &Path, corpus: &Path) -> Result<(Checkpoint, Corpus)> {
        let ckpt = self.checkpoint(checkpoint)?;
        let corpus = ckpt.bind_corpus(self.admissions(corpus)?)?;
        self.corpus_fingerprint = Some(hex(corpus.fingerprint()));
        Ok((ckpt, corpus))
    }
}

fn render(table: &Table, format: Format) -> Result<String> {
    match (format, table) {
        (Format::Csv, _) => render_table(table, ExportFormat::Csv),
        (Format::Json, _) => render_table(table, ExportFormat::Json),
        (Format::Markdown, Table::NGram { table }) => Ok(render_ngram_markdown(table)),
        (Format::Markdown, _) => Err(Error::Invalid(
            "markdown output is only available for ngram".into(),
        )),
    }
}

fn parse_codes(values: &[String]) -> Result<Vec<Code>> {
    values.iter().map(|v| Code::new(v.as_str())).collect()
}

/// Runs `command` with the resolved configuration. Commands that write
/// files also write a manifest next to their first output.
pub fn execute(mut command: Command, cfg: &RunConfig) -> Result<()> {
    if let Command::Rerun { manifest, out_dir } = command {
        return rerun(&manifest, out_dir.as_deref());
    }
    command.absolutize()?;
    let mut run = Run::default();
    run_command(&command, cfg, &mut run)?;
    if let Some(first) = run.outputs.first() {
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.clone(),
            config: cfg.clone(),
            seed: cfg.seed,
            corpus_fingerprint: run.corpus_fingerprint.clone(),
            inputs: run.inputs.clone(),
            outputs: run.outputs.clone(),
        };
        atomic_write(manifest_path(&first.path), &manifest.to_bytes()?)?;
    }
    Ok(())
}

fn run_command(command: &Command, cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let mode = cfg.initial_entropy;
    match command {
        Command::Synth { spec, n, out } => {
            let text =
                String::from_utf8(run.read(spec)?).map_err(|e| Error::Invalid(e.to_string()))?;
            let mut spec = GeneratorSpec::from_json(&text)?;
            spec.seed = cfg.seed;
            let corpus = synth_generate(&spec, *n)?;
            run.corpus_fingerprint = Some(hex(corpus.fingerprint()));
            let mut buf = Vec::new();
            write_jsonl(corpus.admissions(), &mut buf)?;
            run.write(out, &buf)
        }
        Command::Train { corpus, checkpoint } => {
            let corpus = Corpus::new(run.admissions(corpus)?, cfg.min_count)?;
            run.corpus_fingerprint = Some(hex(corpus.fingerprint()));
            let corpus = split(corpus, cfg.split, cfg.seed)?;
            let mut model = Seq2SeqModel::new(
                cfg.model_config(corpus.proc_vocab().len(), corpus.diag_vocab().len()),
            )?;
            let epochs = cfg.epochs;
            train_with(&mut model, &corpus, &cfg.train_options(), |epoch, loss| {
                println!("epoch {}/{epochs} loss {loss:.6}", epoch + 1);
            })?;
            let binding =
                CorpusBinding::for_corpus(&corpus, cfg.min_count).with_split(cfg.split, cfg.seed);
            run.write(checkpoint, &checkpoint_bytes(&model, &binding)?)
        }
        Command::Eval {
            corpus,
            checkpoint,
            split,
            out,
        } => {
            let (ckpt, corpus) = run.bound(checkpoint, corpus)?;
            let report = evaluate(&ckpt.model, &corpus, split.split())?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            if out.is_some() {
                run.emit(out.as_deref(), &text)?;
            }
            run.emit(None, &text)
        }
        Command::Trend {
            checkpoint,
            corpus,
            admission_id,
            all,
            out,
            format,
        } => {
            let (ckpt, corpus) = run.bound(checkpoint, corpus)?;
            let trends = if *all {
                all_trends(&ckpt.model, &corpus, mode, None)?
            } else {
                let id = admission_id.as_deref().unwrap_or_default();
                let adm = corpus
                    .get(id)
                    .ok_or_else(|| Error::Invalid(format!("no admission with id {id:?}")))?;
                vec![entropy_trend(&ckpt.model, adm, mode, &corpus)?]
            };
            run.emit(out.as_deref(), &render(&Table::Trends { trends }, *format)?)
        }
        Command::Ngram {
            checkpoint,
            corpus,
            n,
            top,
            out,
            format,
        } => {
            let (ckpt, corpus) = run.bound(checkpoint, corpus)?;
            let table = ngram_entropy_table(&ckpt.model, &corpus, *n, *top, mode)?;
            run.emit(out.as_deref(), &render(&Table::NGram { table }, *format)?)
        }
        Command::Cluster {
            checkpoint,
            corpus,
            length,
            keys,
            out,
            format,
        } => {
            let (ckpt, corpus) = run.bound(checkpoint, corpus)?;
            let clusters =
                cluster_trends(&ckpt.model, &corpus, *length, &parse_codes(keys)?, mode)?;
            run.emit(
                out.as_deref(),
                &render(&Table::Clusters { clusters }, *format)?,
            )
        }
        Command::Serve {
            checkpoint,
            corpus,
            bind,
            ui_dir,
        } => {
            let (ckpt, corpus) = run.bound(checkpoint, corpus)?;
            let engine = Engine::new(ckpt, &corpus, mode)?;
            serve_blocking(engine, bind, ui_dir.clone())
        }
        Command::Rerun { .. } => unreachable!("handled by execute"),
    }
}

fn serve_blocking(engine: Engine, bind: &str, ui_dir: Option<PathBuf>) -> Result<()> {
    let io = |source| Error::Io {
        path: PathBuf::from(bind),
        source,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await.map_err(io)?;
        let addr = listener.local_addr().map_err(io)?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().map_err(io)?;
        serve(
            listener,
            router(AppState::new(engine), ui_dir),
            shutdown_signal(),
        )
        .await
        .map_err(io)
    })
}

fn rerun(manifest_file: &Path, out_dir: Option<&Path>) -> Result<()> {
    let recorded = Manifest::read(manifest_file)?;
    let mut command = recorded.command.clone();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for out in command.outputs_mut() {
            let name = out.file_name().map(PathBuf::from).unwrap_or_default();
            *out = dir.join(name);
        }
    }
    command.absolutize()?;
    let mut run = Run::default();
    run_command(&command, &recorded.config, &mut run)?;

    let changed: Vec<String> = recorded
        .inputs
        .iter()
        .zip(&run.inputs)
        .filter(|(a, b)| a.fingerprint != b.fingerprint)
        .map(|(a, _)| a.path.display().to_string())
        .collect();
    if !changed.is_empty() {
        return Err(Error::Invalid(format!(
            "inputs changed since the recorded run: {}",
            changed.join(", ")
        )));
    }
    let differing: Vec<String> = recorded
        .outputs
        .iter()
        .zip(&run.outputs)
        .filter(|(a, b)| a.fingerprint != b.fingerprint)
        .map(|(_, b)| b.path.display().to_string())
        .collect();
    if !differing.is_empty() || recorded.outputs.len() != run.outputs.len() {
        return Err(Error::Invalid(format!(
            "rerun produced different outputs: {}",
            differing.join(", ")
        )));
    }
    let summary = serde_json::json!({ "verified": true, "outputs": run.outputs });
    eprintln!("{summary}");
    Ok(())
}
