//! CSV and JSON renderings of trends, n-gram tables and cluster trends.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! parsing an export and rendering it again reproduces it byte for byte.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{ClusterKey, ClusterTrend, NGramRow, NGramTable, StepStat};
use crate::corpus::Code;
use crate::entropy::{EntropyTrend, TrendStep};
use crate::error::{Error, Result};
use crate::util::atomic_write;

pub const SCHEMA_VERSION: u32 = 1;

pub const TREND_HEADER: [&str; 4] = ["admission_id", "step", "procedure_code", "entropy_bits"];
pub const CLUSTER_HEADER: [&str; 5] = ["cluster", "step", "mean_bits", "std_bits", "count"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::invalid(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    Trends,
    NGram,
    Clusters,
}

/// Anything the analyses export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Table {
    Trends {
        trends: Vec<EntropyTrend>,
    },
    #[serde(rename = "ngram")]
    NGram {
        table: NGramTable,
    },
    Clusters {
        clusters: Vec<ClusterTrend>,
    },
}

impl Table {
    pub fn kind(&self) -> TableKind {
        match self {
            Table::Trends { .. } => TableKind::Trends,
            Table::NGram { .. } => TableKind::NGram,
            Table::Clusters { .. } => TableKind::Clusters,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonEnvelope {
    schema_version: u32,
    #[serde(flatten)]
    table: Table,
}

pub fn render_table(table: &Table, format: ExportFormat) -> Result<String> {
    match format {
        ExportFormat::Json => {
            let envelope = JsonEnvelope {
                schema_version: SCHEMA_VERSION,
                table: table.clone(),
            };
            let mut s = serde_json::to_string_pretty(&envelope)?;
            s.push('\n');
            Ok(s)
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            match table {
                Table::Trends { trends } => write_trends(&mut w, trends)?,
                Table::NGram { table } => write_ngram(&mut w, table)?,
                Table::Clusters { clusters } => write_clusters(&mut w, clusters)?,
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
        }
    }
}

/// Renders and writes atomically.
pub fn export_table(table: &Table, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    atomic_write(path, render_table(table, format)?.as_bytes())
}

fn write_trends(w: &mut csv::Writer<Vec<u8>>, trends: &[EntropyTrend]) -> Result<()> {
    w.write_record(TREND_HEADER)?;
    for t in trends {
        for s in &t.steps {
            w.write_record([
                t.admission_id.as_str(),
                &s.step.to_string(),
                s.procedure.as_ref().map_or("", Code::as_str),
                &s.entropy_bits.to_string(),
            ])?;
        }
    }
    Ok(())
}

fn ngram_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["rank", "codes", "cases", "frequency"]
        .map(String::from)
        .to_vec();
    h.extend((1..=n).map(|m| format!("entropy_step_{m}")));
    h
}

fn write_ngram(w: &mut csv::Writer<Vec<u8>>, table: &NGramTable) -> Result<()> {
    w.write_record(ngram_header(table.n))?;
    for row in &table.rows {
        let codes: Vec<&str> = row.prefix.iter().map(Code::as_str).collect();
        let mut rec = vec![
            row.rank.to_string(),
            codes.join(" "),
            row.cases.to_string(),
            row.frequency.to_string(),
        ];
        rec.extend(row.entropy_after.iter().map(f64::to_string));
        w.write_record(rec)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_clusters(w: &mut csv::Writer<Vec<u8>>, clusters: &[ClusterTrend]) -> Result<()> {
    w.write_record(CLUSTER_HEADER)?;
    for c in clusters {
        for s in &c.per_step {
            w.write_record([
                c.cluster_key.to_string(),
                s.step.to_string(),
                opt(s.mean_bits),
                opt(s.std_bits),
                s.count.to_string(),
            ])?;
        }
    }
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column {i}"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {raw:?}"),
    })
}

fn opt_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, line).map(Some),
    }
}

/// Parses text produced by [`render_table`].
pub fn parse_table(kind: TableKind, text: &str, format: ExportFormat) -> Result<Table> {
    if format == ExportFormat::Json {
        let env: JsonEnvelope = serde_json::from_str(text)?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema_version {}",
                env.schema_version
            )));
        }
        if env.table.kind() != kind {
            return Err(Error::invalid("export holds a different table kind"));
        }
        return Ok(env.table);
    }

    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let expect_header = |expected: &[String]| -> Result<()> {
        if header != expected {
            return Err(Error::invalid(format!("unexpected header {header:?}")));
        }
        Ok(())
    };
    let records: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
    let numbered = records.iter().enumerate().map(|(i, rec)| (i + 2, rec));

    match kind {
        TableKind::Trends => {
            expect_header(&TREND_HEADER.map(String::from))?;
            let mut trends: Vec<EntropyTrend> = Vec::new();
            for (line, rec) in numbered {
                let id = rec.get(0).unwrap_or_default().to_string();
                let code = rec.get(2).unwrap_or_default();
                let step = TrendStep {
                    step: field(rec, 1, line)?,
                    procedure: if code.is_empty() {
                        None
                    } else {
                        Some(Code::new(code)?)
                    },
                    entropy_bits: field(rec, 3, line)?,
                };
                match trends.last_mut() {
                    Some(t) if t.admission_id == id && step.step > 0 => t.steps.push(step),
                    _ => trends.push(EntropyTrend {
                        admission_id: id,
                        steps: vec![step],
                    }),
                }
            }
            Ok(Table::Trends { trends })
        }
        TableKind::NGram => {
            let n = header.len().saturating_sub(4);
            if n == 0 {
                return Err(Error::invalid("n-gram table has no entropy columns"));
            }
            expect_header(&ngram_header(n))?;
            let rows = numbered
                .map(|(line, rec)| {
                    Ok(NGramRow {
                        rank: field(rec, 0, line)?,
                        prefix: rec
                            .get(1)
                            .unwrap_or_default()
                            .split(' ')
                            .map(Code::new)
                            .collect::<Result<_>>()?,
                        cases: field(rec, 2, line)?,
                        frequency: field(rec, 3, line)?,
                        entropy_after: (4..4 + n)
                            .map(|i| field(rec, i, line))
                            .collect::<Result<_>>()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Table::NGram {
                table: NGramTable {
                    n,
                    initial_bits: None,
                    rows,
                },
            })
        }
        TableKind::Clusters => {
            expect_header(&CLUSTER_HEADER.map(String::from))?;
            let mut clusters: Vec<ClusterTrend> = Vec::new();
            for (line, rec) in numbered {
                let key = ClusterKey::try_from(rec.get(0).unwrap_or_default().to_string())?;
                let stat = StepStat {
                    step: field(rec, 1, line)?,
                    mean_bits: opt_field(rec, 2, line)?,
                    std_bits: opt_field(rec, 3, line)?,
                    count: field(rec, 4, line)?,
                };
                match clusters.last_mut() {
                    Some(c) if c.cluster_key == key && stat.step > 0 => c.per_step.push(stat),
                    _ => clusters.push(ClusterTrend {
                        cluster_key: key,
                        length_filter: 0,
                        per_step: vec![stat],
                    }),
                }
            }
            for c in &mut clusters {
                c.length_filter = c.per_step.len() - 1;
            }
            Ok(Table::Clusters { clusters })
        }
    }
}
