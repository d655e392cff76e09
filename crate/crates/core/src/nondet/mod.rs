//! Nondeterministic causal models.
//!
//! A model is a DAG over finite-domain variables together with one conditional
//! probability table per non-root variable. Root variables never carry a
//! marginal: every query conditions on a total root assignment.
//!
//! Counterfactuals follow the evidence-update semantics: observing a world `v`
//! turns the CPT row at each variable's *actual* parent values into a point
//! mass on its actual value, while every other row keeps its prior. The
//! counterfactual distribution is then the updated model's distribution with
//! the roots clamped to `r*`. [`NondetModel::counterfactual_dist`] computes it
//! that way; [`NondetModel::counterfactual_dist_cases`] computes the same
//! quantity from the closed four-case form over all worlds, so the two can be
//! cross-checked.

mod graph;
mod json;
mod validate;

use serde::{Deserialize, Serialize};

use crate::cap::{space_size, EnumCap};
use crate::dist::DistTable;
use crate::error::{Error, Result};

pub use graph::CausalGraph;
pub use json::{CptDraft, ModelDraft, VarDraft};
pub use validate::{validate_model, ValidationReport, Violation};

/// Tolerance for CPT row normalization.
pub const ROW_TOL: f64 = 1e-9;

/// Tolerance used for exact-equality comparisons between evaluators.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSpec {
    pub name: String,
    pub domain: Vec<String>,
}

impl VarSpec {
    pub fn new(name: impl Into<String>, domain: impl IntoIterator<Item = impl Into<String>>) -> Self {
        VarSpec { name: name.into(), domain: domain.into_iter().map(Into::into).collect() }
    }

    /// Domain `["0", "1"]`.
    pub fn binary(name: impl Into<String>) -> Self {
        VarSpec::new(name, ["0", "1"])
    }

    pub fn size(&self) -> usize {
        self.domain.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.domain.iter().position(|d| d == value)
    }
}

/// Conditional table for one child. Rows are indexed in mixed radix over the
/// parents' domains, first parent most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    parents: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(parents: Vec<usize>, rows: Vec<Vec<f64>>) -> Self {
        Cpt { parents, rows }
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row_is_point_mass(&self, row: usize) -> bool {
        let r = &self.rows[row];
        r.iter().filter(|p| **p != 0.0).count() == 1 && r.contains(&1.0)
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.rows.len()).all(|i| self.row_is_point_mass(i))
    }
}

/// A total assignment: one domain index per variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct World(pub Vec<usize>);

/// A partial assignment, used for root clamps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<Option<usize>>);

impl World {
    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

/// Outcome of [`NondetModel::check_simple_semantics`].
#[derive(Debug, Clone, Serialize)]
pub struct SimpleSemanticsReport {
    pub pass: bool,
    pub instances: usize,
    pub max_deviation: f64,
    pub counterexample: Option<SimpleCounterexample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimpleCounterexample {
    pub evidence: String,
    pub intervention: String,
    pub world: String,
    pub counterfactual: f64,
    pub observational: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondetModel {
    vars: Vec<VarSpec>,
    graph: CausalGraph,
    cpts: Vec<Option<Cpt>>,
    order: Vec<usize>,
    roots: Vec<usize>,
}

impl NondetModel {
    /// Builds a model, rejecting it if [`validate_model`] would report any violation.
    pub fn new(vars: Vec<VarSpec>, edges: Vec<(usize, usize)>, cpts: Vec<Option<Cpt>>) -> Result<Self> {
        let violations = validate::check_parts(&vars, &edges, &cpts);
        if !violations.is_empty() {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidModel(msg));
        }
        let graph = CausalGraph::new(vars.len(), edges);
        let order = graph.topological_order().expect("acyclicity checked above");
        let roots = graph.roots();
        Ok(NondetModel { vars, graph, cpts, order, roots })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ModelDraft::from_json(text)?.build()
    }

    pub fn to_json(&self) -> String {
        ModelDraft::from_model(self).to_json()
    }

    pub fn vars(&self) -> &[VarSpec] {
        &self.vars
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn cpt(&self, var: usize) -> Option<&Cpt> {
        self.cpts[var].as_ref()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn is_root(&self, var: usize) -> bool {
        self.cpts[var].is_none()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    fn nonroots_in_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied().filter(|&v| !self.is_root(v))
    }

    /// Builds a total world from `(name, value)` pairs.
    pub fn world(&self, pairs: &[(&str, &str)]) -> Result<World> {
        let a = self.assignment(pairs)?;
        match a.0.into_iter().collect::<Option<Vec<_>>>() {
            Some(values) => Ok(World(values)),
            None => Err(Error::InvalidQuery("world does not assign every variable".into())),
        }
    }

    /// Builds a partial assignment from `(name, value)` pairs.
    pub fn assignment(&self, pairs: &[(&str, &str)]) -> Result<Assignment> {
        let mut out = vec![None; self.vars.len()];
        for (name, value) in pairs {
            let i = self
                .var_index(name)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown variable {name}")))?;
            let v = self.vars[i]
                .index_of(value)
                .ok_or_else(|| Error::InvalidQuery(format!("{value} not in domain of {name}")))?;
            out[i] = Some(v);
        }
        Ok(Assignment(out))
    }

    /// `name=value` rendering, variables in declaration order.
    pub fn describe(&self, world: &World) -> String {
        self.vars
            .iter()
            .zip(&world.0)
            .map(|(var, &v)| format!("{}={}", var.name, var.domain[v]))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn describe_assignment(&self, a: &Assignment) -> String {
        self.vars
            .iter()
            .zip(&a.0)
            .filter_map(|(var, v)| v.map(|v| format!("{}={}", var.name, var.domain[v])))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Restriction of a world to the root variables.
    pub fn root_assignment(&self, world: &World) -> Assignment {
        let mut out = vec![None; self.vars.len()];
        for &r in &self.roots {
            out[r] = Some(world.0[r]);
        }
        Assignment(out)
    }

    /// Every total assignment of the roots, in mixed-radix order.
    pub fn all_root_assignments(&self) -> Vec<Assignment> {
        let sizes: Vec<usize> = self.roots.iter().map(|&r| self.vars[r].size()).collect();
        odometer(&sizes)
            .map(|digits| {
                let mut out = vec![None; self.vars.len()];
                for (&r, d) in self.roots.iter().zip(digits) {
                    out[r] = Some(d);
                }
                Assignment(out)
            })
            .collect()
    }

    pub fn check_world(&self, world: &World) -> Result<()> {
        if world.0.len() != self.vars.len() {
            return Err(Error::InvalidQuery(format!(
                "world has {} values, model has {} variables",
                world.0.len(),
                self.vars.len()
            )));
        }
        for (var, &v) in self.vars.iter().zip(&world.0) {
            if v >= var.size() {
                return Err(Error::InvalidQuery(format!("value index {v} out of domain of {}", var.name)));
            }
        }
        Ok(())
    }

    /// Requires `a` to assign exactly the roots, each within its domain.
    pub fn check_root_assignment(&self, a: &Assignment) -> Result<()> {
        if a.0.len() != self.vars.len() {
            return Err(Error::InvalidQuery("root assignment has the wrong arity".into()));
        }
        for (i, (var, v)) in self.vars.iter().zip(&a.0).enumerate() {
            match (self.is_root(i), v) {
                (true, None) => {
                    return Err(Error::InvalidQuery(format!("root {} is not assigned", var.name)))
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidQuery(format!("{} is not a root and cannot be clamped", var.name)))
                }
                (true, Some(v)) if *v >= var.size() => {
                    return Err(Error::InvalidQuery(format!("value index {v} out of domain of {}", var.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn row_index(&self, cpt: &Cpt, values: &[usize]) -> usize {
        cpt.parents.iter().fold(0, |acc, &p| acc * self.vars[p].size() + values[p])
    }

    /// `P(var = values[var] | parents as in values)`; only parent entries of
    /// `values` are read besides the child's own.
    pub fn cond_prob(&self, var: usize, values: &[usize], value: usize) -> f64 {
        let cpt = self.cpts[var].as_ref().expect("cond_prob on a root variable");
        cpt.rows[self.row_index(cpt, values)][value]
    }

    fn parents_match(&self, var: usize, a: &[usize], b: &[usize]) -> bool {
        let cpt = self.cpts[var].as_ref().expect("non-root");
        cpt.parents.iter().all(|&p| a[p] == b[p])
    }

    /// `P(v | r)`: the product of CPT entries over the non-root variables.
    pub fn joint_prob(&self, v: &World, r: &Assignment) -> Result<f64> {
        self.check_world(v)?;
        self.check_root_assignment(r)?;
        if self.roots.iter().any(|&root| r.0[root] != Some(v.0[root])) {
            return Err(Error::InvalidQuery("world is inconsistent with the root assignment".into()));
        }
        Ok(self.nonroots_in_order().map(|x| self.cond_prob(x, &v.0, v.0[x])).product())
    }

    fn require_possible(&self, v: &World) -> Result<()> {
        let p = self.joint_prob(v, &self.root_assignment(v))?;
        if p > 0.0 {
            Ok(())
        } else {
            Err(Error::ImpossibleEvidence)
        }
    }

    /// Model whose CPT row at each variable's actual parent values is a point
    /// mass on the actual value. All other rows are untouched.
    pub fn evidence_update(&self, v: &World) -> Result<NondetModel> {
        self.require_possible(v)?;
        let mut updated = self.clone();
        for x in self.nonroots_in_order().collect::<Vec<_>>() {
            let row = {
                let cpt = self.cpts[x].as_ref().expect("non-root");
                self.row_index(cpt, &v.0)
            };
            let size = self.vars[x].size();
            let cpt = updated.cpts[x].as_mut().expect("non-root");
            cpt.rows[row] = (0..size).map(|i| if i == v.0[x] { 1.0 } else { 0.0 }).collect();
        }
        Ok(updated)
    }

    fn extension_count(&self) -> u128 {
        space_size(self.nonroots_in_order().map(|x| self.vars[x].size()))
    }

    /// Depth-first enumeration of every world extending `r`, skipping branches
    /// whose factor is zero.
    fn enumerate_with<F>(&self, r: &Assignment, factor: F) -> Vec<(World, f64)>
    where
        F: Fn(usize, &[usize], usize) -> f64,
    {
        let nonroots: Vec<usize> = self.nonroots_in_order().collect();
        let mut current = vec![0usize; self.vars.len()];
        for &root in &self.roots {
            current[root] = r.0[root].expect("checked root assignment");
        }
        let mut out = Vec::new();
        self.dfs(&nonroots, 0, 1.0, &mut current, &mut out, &factor);
        out
    }

    fn dfs<F>(&self, nonroots: &[usize], depth: usize, p: f64, current: &mut Vec<usize>, out: &mut Vec<(World, f64)>, factor: &F)
    where
        F: Fn(usize, &[usize], usize) -> f64,
    {
        let Some(&var) = nonroots.get(depth) else {
            out.push((World(current.clone()), p));
            return;
        };
        for value in 0..self.vars[var].size() {
            let f = factor(var, current, value);
            if f > 0.0 {
                current[var] = value;
                self.dfs(nonroots, depth + 1, p * f, current, out, factor);
            }
        }
    }

    /// Every positive-probability world extending the root assignment `r`,
    /// with its probability `P(v | r)`.
    pub fn extensions(&self, r: &Assignment, cap: EnumCap) -> Result<Vec<(World, f64)>> {
        self.check_root_assignment(r)?;
        cap.check(self.extension_count())?;
        Ok(self.enumerate_with(r, |var, values, value| self.cond_prob(var, values, value)))
    }

    pub fn observational_dist(&self, r: &Assignment, cap: EnumCap) -> Result<DistTable<World>> {
        Ok(DistTable::from_weights(self.extensions(r, cap)?))
    }

    /// Counterfactual distribution over worlds given evidence `v` and root clamp `r_star`.
    pub fn counterfactual_dist(&self, v: &World, r_star: &Assignment, cap: EnumCap) -> Result<DistTable<World>> {
        self.check_root_assignment(r_star)?;
        self.require_possible(v)?;
        cap.check(self.extension_count())?;
        // Evidence-updated CPTs, read through without cloning the model.
        let worlds = self.enumerate_with(r_star, |var, values, value| {
            if self.parents_match(var, values, &v.0) {
                if value == v.0[var] {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cond_prob(var, values, value)
            }
        });
        Ok(DistTable::from_weights(worlds))
    }

    /// The same distribution as [`Self::counterfactual_dist`], evaluated world
    /// by world from the closed four-case form:
    ///
    /// 1. `0` if the world disagrees with `r_star` on a root;
    /// 2. `0` if some non-root keeps its actual parents but changes value;
    /// 3. `1` if no non-root has non-actual parents;
    /// 4. otherwise the product of prior CPT entries over the non-roots whose
    ///    parents are non-actual.
    pub fn counterfactual_dist_cases(&self, v: &World, r_star: &Assignment, cap: EnumCap) -> Result<DistTable<World>> {
        self.check_root_assignment(r_star)?;
        self.require_possible(v)?;
        let sizes: Vec<usize> = self.vars.iter().map(VarSpec::size).collect();
        cap.check(space_size(sizes.iter().copied()))?;
        let nonroots: Vec<usize> = (0..self.vars.len()).filter(|&i| !self.is_root(i)).collect();
        let mut out = Vec::new();
        for digits in odometer(&sizes) {
            if self.roots.iter().any(|&r| r_star.0[r] != Some(digits[r])) {
                continue;
            }
            let case2 = nonroots
                .iter()
                .any(|&y| self.parents_match(y, &digits, &v.0) && digits[y] != v.0[y]);
            if case2 {
                continue;
            }
            let changed: Vec<usize> = nonroots
                .iter()
                .copied()
                .filter(|&y| !self.parents_match(y, &digits, &v.0))
                .collect();
            let p = if changed.is_empty() {
                1.0
            } else {
                changed.iter().map(|&y| self.cond_prob(y, &digits, digits[y])).product()
            };
            if p > 0.0 {
                out.push((World(digits), p));
            }
        }
        Ok(DistTable::from_weights(out))
    }

    /// Checks, for every positive-probability world `v` and every root clamp
    /// `r*` differing from `v`'s roots, that the counterfactual distribution
    /// equals the observational distribution under `r*`.
    pub fn check_simple_semantics(&self, cap: EnumCap) -> Result<SimpleSemanticsReport> {
        let roots = self.all_root_assignments();
        let priors = roots
            .iter()
            .map(|r| self.observational_dist(r, cap))
            .collect::<Result<Vec<_>>>()?;
        let mut report = SimpleSemanticsReport { pass: true, instances: 0, max_deviation: 0.0, counterexample: None };
        for (ri, prior) in priors.iter().enumerate() {
            for (v, p) in prior.iter() {
                if p <= 0.0 {
                    continue;
                }
                for (si, r_star) in roots.iter().enumerate() {
                    if si == ri {
                        continue;
                    }
                    let cf = self.counterfactual_dist(v, r_star, cap)?;
                    let target = &priors[si];
                    report.instances += 1;
                    let worst = cf
                        .iter()
                        .chain(target.iter())
                        .map(|(w, _)| (w, (cf.get(w) - target.get(w)).abs()))
                        .fold(None::<(&World, f64)>, |acc, (w, d)| match acc {
                            Some((_, best)) if best >= d => acc,
                            _ => Some((w, d)),
                        });
                    if let Some((w, d)) = worst {
                        report.max_deviation = report.max_deviation.max(d);
                        if d > EXACT_TOL && report.counterexample.is_none() {
                            report.pass = false;
                            report.counterexample = Some(SimpleCounterexample {
                                evidence: self.describe(v),
                                intervention: self.describe_assignment(r_star),
                                world: self.describe(w),
                                counterfactual: cf.get(w),
                                observational: target.get(w),
                            });
                        }
                    }
                }
            }
        }
        Ok(report)
    }
}

/// Mixed-radix counter over `sizes`, last position fastest.
pub(crate) fn odometer(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let empty = sizes.contains(&0);
    let mut next = if empty { None } else { Some(vec![0usize; sizes.len()]) };
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        let mut i = sizes.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            succ[i] += 1;
            if succ[i] < sizes[i] {
                next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    })
}

#[cfg(test)]
mod tests;
