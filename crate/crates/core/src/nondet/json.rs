//! JSON interchange for [`NondetModel`].
//!
//! ```json
//! {"vars":[{"name":"X","domain":["0","1"]}, ...],
//!  "edges":[["X","Y"]],
//!  "cpts":{"Y":{"parents":["X"],"rows":{"0":[0.3,0.7],"1":[0.7,0.3]}}}}
//! ```
//!
//! Row keys are the comma-joined parent values in `parents` order; each row
//! lists probabilities in domain order. Domain values may be written as JSON
//! strings or numbers and are kept as strings.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize};

use super::validate::{row_label, validate_model, Violation};
use super::{Cpt, NondetModel, VarSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDraft {
    pub name: String,
    #[serde(deserialize_with = "scalars_as_strings")]
    pub domain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptDraft {
    #[serde(default)]
    pub parents: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

/// Unvalidated, name-keyed form of a model as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDraft {
    pub vars: Vec<VarDraft>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub cpts: BTreeMap<String, CptDraft>,
}

pub(crate) fn scalars_as_strings<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    let raw = Vec::<serde_json::Value>::deserialize(d)?;
    raw.into_iter()
        .map(|v| match v {
            serde_json::Value::String(s) => Ok(s),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            other => Err(serde::de::Error::custom(format!("domain value must be a scalar, got {other}"))),
        })
        .collect()
}

fn normalize_key(key: &str) -> String {
    key.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}

type Parts = (Vec<VarSpec>, Vec<(usize, usize)>, Vec<Option<Cpt>>);

impl ModelDraft {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model drafts always serialize")
    }

    /// Validates and converts to a model.
    pub fn build(&self) -> Result<NondetModel> {
        let report = validate_model(self);
        if !report.ok() {
            let msg = report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidModel(msg));
        }
        let (parts, _) = self.resolve();
        let (vars, edges, cpts) = parts.expect("validated drafts resolve");
        NondetModel::new(vars, edges, cpts)
    }

    /// Resolves names to indices. Name-level problems are returned as
    /// violations; index-level checks are left to the caller.
    pub(super) fn resolve(&self) -> (Option<Parts>, Vec<Violation>) {
        let mut violations = Vec::new();
        let vars: Vec<VarSpec> =
            self.vars.iter().map(|v| VarSpec { name: v.name.clone(), domain: v.domain.clone() }).collect();
        let index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        let lookup = |name: &str, location: String, violations: &mut Vec<Violation>| {
            let found = index.get(name).copied();
            if found.is_none() {
                violations.push(Violation { location, message: format!("unknown variable {name}") });
            }
            found
        };

        let mut edges = Vec::new();
        for (a, b) in &self.edges {
            let loc = format!("edge {a}->{b}");
            if let (Some(p), Some(c)) = (lookup(a, loc.clone(), &mut violations), lookup(b, loc, &mut violations)) {
                edges.push((p, c));
            }
        }

        let mut cpts: Vec<Option<Cpt>> = vec![None; vars.len()];
        for (child, draft) in &self.cpts {
            let Some(ci) = lookup(child, format!("cpt {child}"), &mut violations) else { continue };
            let parents: Vec<usize> = draft
                .parents
                .iter()
                .filter_map(|p| lookup(p, format!("cpt {child} parents"), &mut violations))
                .collect();
            if parents.len() != draft.parents.len() {
                continue;
            }
            let mut given: BTreeMap<String, &Vec<f64>> =
                draft.rows.iter().map(|(k, v)| (normalize_key(k), v)).collect();
            let n_rows: usize = parents.iter().map(|&p| vars[p].size()).product();
            let rows = (0..n_rows)
                .map(|r| given.remove(&row_label(&vars, &parents, r)).cloned().unwrap_or_default())
                .collect();
            for key in given.keys() {
                violations.push(Violation {
                    location: format!("cpt {child} row {key}"),
                    message: "row key does not match any parent configuration".into(),
                });
            }
            cpts[ci] = Some(Cpt::new(parents, rows));
        }

        if violations.is_empty() {
            (Some((vars, edges, cpts)), violations)
        } else {
            (None, violations)
        }
    }

    pub fn from_model(m: &NondetModel) -> Self {
        let vars = m.vars();
        let edges = m
            .graph()
            .edges()
            .map(|(p, c)| (vars[p].name.clone(), vars[c].name.clone()))
            .collect();
        let mut cpts = BTreeMap::new();
        for (i, var) in vars.iter().enumerate() {
            if let Some(cpt) = m.cpt(i) {
                let rows = cpt
                    .rows()
                    .iter()
                    .enumerate()
                    .map(|(r, row)| (row_label(vars, cpt.parents(), r), row.clone()))
                    .collect();
                let parents = cpt.parents().iter().map(|&p| vars[p].name.clone()).collect();
                cpts.insert(var.name.clone(), CptDraft { parents, rows });
            }
        }
        ModelDraft {
            vars: vars.iter().map(|v| VarDraft { name: v.name.clone(), domain: v.domain.clone() }).collect(),
            edges,
            cpts,
        }
    }
}
