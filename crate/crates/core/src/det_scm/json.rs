//! JSON interchange for [`DetScm`].
//!
//! ```json
//! {"endo":[{"name":"X","domain":["0","1"]},{"name":"Y","domain":["0","1"]}],
//!  "exo":[{"name":"U","domain":["Y=X","Y=notX","Y=0","Y=1"]}],
//!  "edges":[["X","Y"]],
//!  "p_u":{"Y=X":0.3,"Y=notX":0.7,"Y=0":0.0,"Y=1":0.0},
//!  "responses":{"Y=X|0":["0","0"],"Y=X|1":["1","1"], ...}}
//! ```
//!
//! `p_u` keys are comma-joined exogenous values. `responses` keys are the
//! exogenous key and the comma-joined root values (in variable order)
//! separated by `|`; each entry lists every endogenous value. Missing
//! `p_u` keys count as zero; missing responses are an error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DetScm;
use crate::error::{Error, Result};
use crate::nondet::{odometer, CausalGraph, VarDraft, VarSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmFile {
    pub endo: Vec<VarDraft>,
    pub exo: Vec<VarDraft>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    pub p_u: BTreeMap<String, f64>,
    pub responses: BTreeMap<String, Vec<String>>,
}

fn specs(drafts: &[VarDraft]) -> Vec<VarSpec> {
    drafts.iter().map(|d| VarSpec::new(d.name.clone(), d.domain.iter().cloned())).collect()
}

fn drafts(specs: &[VarSpec]) -> Vec<VarDraft> {
    specs.iter().map(|s| VarDraft { name: s.name.clone(), domain: s.domain.clone() }).collect()
}

fn label(vars: &[&VarSpec], values: &[usize]) -> String {
    vars.iter().zip(values).map(|(v, &i)| v.domain[i].as_str()).collect::<Vec<_>>().join(",")
}

impl ScmFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SCM files always serialize")
    }

    pub fn build(&self) -> Result<DetScm> {
        let endo = specs(&self.endo);
        let exo = specs(&self.exo);
        let index = |name: &str| {
            endo.iter()
                .position(|v| v.name == name)
                .ok_or_else(|| Error::InvalidModel(format!("edge mentions unknown variable {name:?}")))
        };
        let edges = self
            .edges
            .iter()
            .map(|(a, b)| Ok((index(a)?, index(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let roots = CausalGraph::new(endo.len(), edges.iter().copied()).roots();
        let exo_refs: Vec<&VarSpec> = exo.iter().collect();
        let root_refs: Vec<&VarSpec> = roots.iter().map(|&r| &endo[r]).collect();

        for key in self.p_u.keys() {
            let known = odometer(&exo.iter().map(VarSpec::size).collect::<Vec<_>>()).any(|u| label(&exo_refs, &u) == *key);
            if !known {
                return Err(Error::InvalidModel(format!("p_u key {key:?} is not an exogenous assignment")));
            }
        }
        let p_u = odometer(&exo.iter().map(VarSpec::size).collect::<Vec<_>>())
            .map(|u| self.p_u.get(&label(&exo_refs, &u)).copied().unwrap_or(0.0))
            .collect();

        let mut failure = None;
        let scm = DetScm::from_fn(endo.clone(), exo.clone(), edges, p_u, |u, r| {
            let key = format!("{}|{}", label(&exo_refs, u), label(&root_refs, r));
            let parsed = match self.responses.get(&key) {
                None => Err(Error::InvalidModel(format!("missing response for {key:?}"))),
                Some(vals) if vals.len() != endo.len() => {
                    Err(Error::InvalidModel(format!("response for {key:?} has the wrong length")))
                }
                Some(vals) => vals
                    .iter()
                    .zip(&endo)
                    .map(|(v, var)| {
                        var.index_of(v)
                            .ok_or_else(|| Error::InvalidModel(format!("{v:?} is not a value of {}", var.name)))
                    })
                    .collect(),
            };
            parsed.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                let mut world = vec![0; endo.len()];
                for (&root, &val) in roots.iter().zip(r) {
                    world[root] = val;
                }
                world
            })
        });
        match failure {
            Some(e) => Err(e),
            None => scm,
        }
    }

    pub fn from_scm(scm: &DetScm) -> Self {
        let exo_refs: Vec<&VarSpec> = scm.exo().iter().collect();
        let root_refs: Vec<&VarSpec> = scm.roots().iter().map(|&r| &scm.endo()[r]).collect();
        let root_sizes: Vec<usize> = root_refs.iter().map(|v| v.size()).collect();
        let mut p_u = BTreeMap::new();
        let mut responses = BTreeMap::new();
        for (ui, p) in scm.p_u().iter().enumerate() {
            let u_label = label(&exo_refs, &scm.u_values(ui));
            p_u.insert(u_label.clone(), *p);
            for (ri, r) in odometer(&root_sizes).enumerate() {
                let world = &scm.responses()[ui * scm.root_combos() + ri];
                let values = world.iter().zip(scm.endo()).map(|(&v, var)| var.domain[v].clone()).collect();
                responses.insert(format!("{u_label}|{}", label(&root_refs, &r)), values);
            }
        }
        ScmFile {
            endo: drafts(scm.endo()),
            exo: drafts(scm.exo()),
            edges: scm
                .graph()
                .edges()
                .map(|(a, b)| (scm.endo()[a].name.clone(), scm.endo()[b].name.clone()))
                .collect(),
            p_u,
            responses,
        }
    }
}
