use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{CausalGraph, Cpt, ModelDraft, VarSpec, ROW_TOL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Non-fatal observations (childless roots, deterministic rows).
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn violation(location: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { location: location.into(), message: message.into() }
}

/// Checks a model draft: acyclic graph, one CPT per non-root, complete and
/// normalized rows, nonempty domains.
pub fn validate_model(draft: &ModelDraft) -> ValidationReport {
    let (parts, mut violations) = draft.resolve();
    let mut notes = Vec::new();
    if let Some((vars, edges, cpts)) = parts {
        violations.extend(check_parts(&vars, &edges, &cpts));
        if violations.is_empty() {
            let graph = CausalGraph::new(vars.len(), edges.iter().copied());
            for r in graph.roots() {
                if graph.children(r).is_empty() && vars.len() > 1 {
                    notes.push(format!(
                        "root {} has no children; the actual-world case of the counterfactual semantics treats it as free",
                        vars[r].name
                    ));
                }
            }
            let deterministic = cpts.iter().flatten().filter(|c| c.is_deterministic()).count();
            if deterministic > 0 {
                notes.push(format!("{deterministic} CPT(s) are fully deterministic"));
            }
        }
    }
    ValidationReport { violations, notes }
}

/// Index-level structural checks shared by [`validate_model`] and
/// [`super::NondetModel::new`].
pub(super) fn check_parts(vars: &[VarSpec], edges: &[(usize, usize)], cpts: &[Option<Cpt>]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    for var in vars {
        if !names.insert(var.name.as_str()) {
            out.push(violation(format!("var {}", var.name), "duplicate variable name"));
        }
        if var.domain.is_empty() {
            out.push(violation(format!("var {}", var.name), "empty domain"));
        }
        let distinct: BTreeSet<&String> = var.domain.iter().collect();
        if distinct.len() != var.domain.len() {
            out.push(violation(format!("var {}", var.name), "domain values are not distinct"));
        }
    }
    if cpts.len() != vars.len() {
        out.push(violation("cpts", "one CPT slot per variable is required"));
        return out;
    }
    for &(p, c) in edges {
        if p >= vars.len() || c >= vars.len() {
            out.push(violation("edges", format!("edge ({p}, {c}) references an unknown variable")));
            return out;
        }
        if p == c {
            out.push(violation(format!("edge {}->{}", vars[p].name, vars[c].name), "self loop (cycle)"));
        }
    }
    let graph = CausalGraph::new(vars.len(), edges.iter().copied());
    if !graph.is_acyclic() {
        out.push(violation("graph", "cycle"));
    }
    for (i, var) in vars.iter().enumerate() {
        let parents = graph.parents(i);
        let loc = format!("cpt {}", var.name);
        match (&cpts[i], parents.is_empty()) {
            (None, true) => {}
            (Some(_), true) => out.push(violation(loc, "root variable carries a CPT")),
            (None, false) => out.push(violation(loc, "non-root variable has no CPT")),
            (Some(cpt), false) => {
                let declared: BTreeSet<usize> = cpt.parents.iter().copied().collect();
                if declared.len() != cpt.parents.len() || declared != parents.iter().copied().collect() {
                    out.push(violation(loc, "CPT parents do not match the graph"));
                    continue;
                }
                let expected_rows: usize = cpt.parents.iter().map(|&p| vars[p].size()).product();
                if cpt.rows.len() != expected_rows {
                    out.push(violation(loc, format!("has {} rows, expected {expected_rows}", cpt.rows.len())));
                    continue;
                }
                for (r, row) in cpt.rows.iter().enumerate() {
                    let row_loc = format!("cpt {} row {}", var.name, row_label(vars, &cpt.parents, r));
                    if row.is_empty() {
                        out.push(violation(row_loc, "missing row"));
                    } else if row.len() != var.size() {
                        out.push(violation(row_loc, format!("has {} entries, domain has {}", row.len(), var.size())));
                    } else if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                        out.push(violation(row_loc, "negative or non-finite probability"));
                    } else {
                        let total: f64 = row.iter().sum();
                        if (total - 1.0).abs() > ROW_TOL {
                            out.push(violation(row_loc, format!("row not normalized (sums to {total})")));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Comma-joined parent values for a mixed-radix row index.
pub(super) fn row_label(vars: &[VarSpec], parents: &[usize], mut row: usize) -> String {
    let mut digits = vec![0; parents.len()];
    for (slot, &p) in parents.iter().enumerate().rev() {
        let size = vars[p].size().max(1);
        digits[slot] = row % size;
        row /= size;
    }
    parents
        .iter()
        .zip(digits)
        .map(|(&p, d)| vars[p].domain.get(d).cloned().unwrap_or_default())
        .collect::<Vec<_>>()
        .join(",")
}
