//! Rendering results as JSON or TSV and writing them out.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use cfgen_core::dist::DistTable;
use cfgen_core::token_model::{ToyLm, TokenSeq};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub output: String,
    pub probability: f64,
}

/// Output text; the empty output is written as the end token.
pub fn render(lm: &ToyLm, seq: &TokenSeq) -> String {
    if seq.is_empty() {
        lm.vocab().token(0).to_string()
    } else {
        lm.vocab().render(seq)
    }
}

pub fn rows(lm: &ToyLm, d: &DistTable<TokenSeq>) -> Vec<Row> {
    d.iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(s, p)| Row { output: render(lm, s), probability: p })
        .collect()
}

pub fn rows_tsv(rows: &[Row]) -> String {
    let mut out = String::from("output\tprobability\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\n", r.output, r.probability));
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs always serialize");
    s.push('\n');
    s
}

pub fn emit(args: &OutputArgs, text: &str) -> CliResult<()> {
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io { path: path.display().to_string(), source: e }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })
        }
    }
}
