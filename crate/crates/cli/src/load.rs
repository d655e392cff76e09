//! Model files on disk and the fixtures bundled into the binary.

use std::fs;
use std::path::Path;

use cfgen_core::det_scm::{DetScm, ScmFile};
use cfgen_core::nondet::{validate_model, ModelDraft, ValidationReport};
use cfgen_core::token_model::ToyLm;
use cfgen_core::Error;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const BUILTIN_PREFIX: &str = "builtin:";

/// Fixtures reachable as `builtin:<name>`.
pub const BUILTINS: [(&str, &str); 6] = [
    ("example1", include_str!("../../../fixtures/example1.json")),
    ("lm_v3_k3", include_str!("../../../fixtures/lm_v3_k3.json")),
    ("asymmetric", include_str!("../../../fixtures/asymmetric.json")),
    ("topk_violation", include_str!("../../../fixtures/topk_violation.json")),
    ("cyclic", include_str!("../../../fixtures/cyclic.json")),
    ("unnormalized", include_str!("../../../fixtures/unnormalized.json")),
];

pub fn read_text(source: &str) -> CliResult<String> {
    if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
        return BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| {
                let names: Vec<&str> = BUILTINS.iter().map(|(n, _)| *n).collect();
                CliError::Config(format!("unknown builtin {name:?}; available: {}", names.join(", ")))
            });
    }
    fs::read_to_string(Path::new(source)).map_err(|e| CliError::Io { path: source.to_string(), source: e })
}

fn model_error(source: &str, e: Error) -> CliError {
    CliError::Model { path: source.to_string(), source: e }
}

pub fn lm(source: &str) -> CliResult<ToyLm> {
    ToyLm::from_json(&read_text(source)?).map_err(|e| model_error(source, e))
}

pub fn scm(source: &str) -> CliResult<DetScm> {
    ScmFile::from_json(&read_text(source)?)
        .and_then(|f| f.build())
        .map_err(|e| model_error(source, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Model,
    Lm,
    Scm,
}

impl FileKind {
    pub fn name(self) -> &'static str {
        match self {
            FileKind::Model => "causal model",
            FileKind::Lm => "token model",
            FileKind::Scm => "structural model",
        }
    }
}

/// Kind of model file, from its top-level keys.
pub fn sniff(source: &str, text: &str) -> CliResult<FileKind> {
    let value: Value = serde_json::from_str(text).map_err(|e| model_error(source, Error::Parse(e.to_string())))?;
    let has = |key: &str| value.get(key).is_some();
    if has("vocab") {
        Ok(FileKind::Lm)
    } else if has("endo") {
        Ok(FileKind::Scm)
    } else if has("vars") {
        Ok(FileKind::Model)
    } else {
        Err(model_error(source, Error::Parse("expected a causal model, token model, or structural model".into())))
    }
}

/// Validation report for any supported file kind.
pub fn validate(source: &str) -> CliResult<(FileKind, ValidationReport)> {
    let text = read_text(source)?;
    let kind = sniff(source, &text)?;
    let failure = |e: Error| ValidationReport {
        violations: vec![cfgen_core::nondet::Violation { location: source.to_string(), message: e.to_string() }],
        notes: Vec::new(),
    };
    let report = match kind {
        FileKind::Model => match ModelDraft::from_json(&text) {
            Ok(draft) => validate_model(&draft),
            Err(e) => failure(e),
        },
        FileKind::Lm => ToyLm::from_json(&text).map(|_| ValidationReport::default()).unwrap_or_else(failure),
        FileKind::Scm => ScmFile::from_json(&text)
            .and_then(|f| f.build())
            .map(|scm| {
                let mut r = ValidationReport::default();
                if scm.is_boundary() {
                    r.notes.push("some exogenous values have zero weight".into());
                }
                if scm.is_u_irrelevant() {
                    r.notes.push("the structural function ignores the exogenous variables".into());
                }
                r
            })
            .unwrap_or_else(failure),
    };
    Ok((kind, report))
}
