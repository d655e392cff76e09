//! Trace file format.
//!
//! ```json
//! {"x": ["b"], "y": ["b", "a"], "kind": "uniform",
//!  "noise": [[0.81], [0.12], [0.55]],
//!  "params": {"temperature": 1.0, "top_k": null, "top_p": null}}
//! ```
//!
//! Tokens are written as strings. Gumbel traces hold one vector over the
//! vocabulary per position; uniform traces hold a one-element list per
//! position. Floats are written in shortest round-trip form, so a trace
//! reloads bit for bit.

use serde::{Deserialize, Serialize};

use super::{FactualTrace, NoiseRecord};
use crate::error::{Error, Result};
use crate::token_model::{SamplingParams, ToyLm, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gumbel,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub kind: NoiseKind,
    pub noise: Vec<Vec<f64>>,
    pub params: SamplingParams,
}

impl TraceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace files always serialize")
    }

    pub fn from_trace(lm: &ToyLm, trace: &FactualTrace) -> Self {
        let v = lm.vocab();
        let (kind, noise) = match &trace.noise {
            NoiseRecord::Gumbel(g) => (NoiseKind::Gumbel, g.clone()),
            NoiseRecord::Uniform(u) => (NoiseKind::Uniform, u.iter().map(|x| vec![*x]).collect()),
        };
        TraceFile {
            x: v.render_ids(trace.x.ids()),
            y: v.render_ids(trace.y.ids()),
            kind,
            noise,
            params: trace.params,
        }
    }

    /// Resolves tokens against `lm` and checks that the noise replays to `y`.
    pub fn to_trace(&self, lm: &ToyLm) -> Result<FactualTrace> {
        let v = lm.vocab();
        let seq = |tokens: &[String]| -> Result<TokenSeq> {
            TokenSeq::new(tokens.iter().map(|t| v.id(t)).collect::<Result<Vec<_>>>()?)
        };
        let noise = match self.kind {
            NoiseKind::Gumbel => NoiseRecord::Gumbel(self.noise.clone()),
            NoiseKind::Uniform => {
                if self.noise.iter().any(|e| e.len() != 1) {
                    return Err(Error::Parse("uniform noise entries must hold exactly one value".into()));
                }
                NoiseRecord::Uniform(self.noise.iter().map(|e| e[0]).collect())
            }
        };
        FactualTrace::new(lm, seq(&self.x)?, seq(&self.y)?, noise, self.params)
    }
}
