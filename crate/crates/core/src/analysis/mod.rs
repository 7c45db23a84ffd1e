//! Corpus-level entropy analyses: most frequent first-N procedure prefixes
//! with their entropy drops, cluster-averaged trends over admissions of a
//! fixed length, and file exports for both.

mod cluster;
mod export;
mod ngram;

pub use cluster::{all_trends, cluster_trends, ClusterKey, ClusterTrend, StepStat};
pub use export::{
    export_table, parse_table, render_table, ExportFormat, Table, TableKind, SCHEMA_VERSION,
};
pub use ngram::{count_prefixes, ngram_entropy_table, render_ngram_markdown, NGramRow, NGramTable};
