//! LM file format.
//!
//! ```json
//! {"vocab": ["</e>", "a", "b"], "k": 3, "type": "table",
//!  "probs": {"": [0.2, 0.5, 0.3], "a": [...], "a,b": [...]},
//!  "unigram": [0.2, 0.5, 0.3]}
//! ```
//!
//! For `"table"` models the keys of `probs` are comma-joined contexts and
//! `unigram` is an optional fallback for contexts without a row. For
//! `"bigram"` models the keys are single tokens (the last token of the
//! context) and `unigram` is required; it serves the empty context and any
//! token without a row.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Family, ToyLm, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmKind {
    Table,
    Bigram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmFile {
    pub vocab: Vec<String>,
    pub k: usize,
    #[serde(rename = "type")]
    pub kind: LmKind,
    pub probs: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unigram: Option<Vec<f64>>,
}

impl LmFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("LM files always serialize")
    }

    pub fn build(&self) -> Result<ToyLm> {
        let vocab = Vocab::new(self.vocab.clone())?;
        let family = match self.kind {
            LmKind::Table => {
                let mut rows = HashMap::new();
                for (key, row) in &self.probs {
                    let ctx = if key.trim().is_empty() {
                        Vec::new()
                    } else {
                        key.split(',').map(|t| vocab.id(t.trim())).collect::<Result<Vec<_>>>()?
                    };
                    if rows.insert(ctx, row.clone()).is_some() {
                        return Err(Error::InvalidModel(format!("duplicate context {key:?}")));
                    }
                }
                Family::Table(rows)
            }
            LmKind::Bigram => {
                let mut rows = HashMap::new();
                for (key, row) in &self.probs {
                    rows.insert(vocab.id(key.trim())?, row.clone());
                }
                Family::Bigram(rows)
            }
        };
        ToyLm::new(vocab, self.k, family, self.unigram.clone())
    }

    pub fn from_lm(lm: &ToyLm) -> Self {
        let vocab = lm.vocab();
        let (kind, probs) = match lm.family() {
            Family::Table(rows) => (
                LmKind::Table,
                rows.iter().map(|(ctx, row)| (vocab.render_ids(ctx).join(","), row.clone())).collect(),
            ),
            Family::Bigram(rows) => (
                LmKind::Bigram,
                rows.iter().map(|(t, row)| (vocab.token(*t).to_string(), row.clone())).collect(),
            ),
        };
        LmFile {
            vocab: vocab.tokens().to_vec(),
            k: lm.k(),
            kind,
            probs,
            unigram: lm.unigram().map(<[f64]>::to_vec),
        }
    }
}
