//! Deterministic structural causal models.
//!
//! All randomness lives in the exogenous variables `U`; the endogenous world
//! is a function `f(u, r)` of the noise and the root values. `f` is stored
//! as an explicit table, one endogenous world per `(u, r)` pair.

mod canonical;
mod exogenize;
mod json;

use crate::cap::{space_size, EnumCap};
use crate::dist::{DistTable, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::nondet::{odometer, Assignment, CausalGraph, Cpt, NondetModel, VarSpec, World};
use crate::token_model::{inverse_transform_index, SamplingParams, ToyLm};

pub use canonical::{counterfactual_bounds_binary, BinaryQuery, BoundsResult, CanonicalBinaryScm, ResponseType};
pub use exogenize::{exogenize, inverse_transform_cells, ExoCell, ExoFragment, ExoMethod};
pub use json::ScmFile;

#[derive(Debug, Clone, PartialEq)]
pub struct DetScm {
    endo: Vec<VarSpec>,
    exo: Vec<VarSpec>,
    graph: CausalGraph,
    roots: Vec<usize>,
    p_u: Vec<f64>,
    /// Indexed by `u_index * root_combos + root_index`.
    responses: Vec<Vec<usize>>,
}

fn mixed_radix(sizes: &[usize], digits: &[usize]) -> usize {
    sizes.iter().zip(digits).fold(0, |acc, (s, d)| acc * s + d)
}

impl DetScm {
    pub fn new(
        endo: Vec<VarSpec>,
        exo: Vec<VarSpec>,
        edges: Vec<(usize, usize)>,
        p_u: Vec<f64>,
        responses: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let graph = CausalGraph::new(endo.len(), edges);
        if graph.edges().any(|(p, c)| p >= endo.len() || c >= endo.len()) {
            return Err(Error::InvalidModel("edge references an unknown variable".into()));
        }
        if !graph.is_acyclic() {
            return Err(Error::InvalidModel("cycle".into()));
        }
        if endo.iter().chain(&exo).any(|v| v.domain.is_empty()) {
            return Err(Error::InvalidModel("empty domain".into()));
        }
        let roots = graph.roots();
        let n_u = space_size(exo.iter().map(VarSpec::size));
        if p_u.len() as u128 != n_u {
            return Err(Error::InvalidModel(format!("p_u has {} entries, expected {n_u}", p_u.len())));
        }
        if p_u.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel("p_u has a negative or non-finite entry".into()));
        }
        let total: f64 = p_u.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidModel(format!("p_u sums to {total}, not 1")));
        }
        let scm = DetScm { endo, exo, graph, roots, p_u, responses };
        let expected = scm.p_u.len() * scm.root_combos();
        if scm.responses.len() != expected {
            return Err(Error::InvalidModel(format!(
                "structural table has {} entries, expected {expected}",
                scm.responses.len()
            )));
        }
        for (i, world) in scm.responses.iter().enumerate() {
            if world.len() != scm.endo.len() || world.iter().zip(&scm.endo).any(|(v, var)| *v >= var.size()) {
                return Err(Error::InvalidModel(format!("structural table entry {i} is not a world")));
            }
            let r = scm.root_digits(i % scm.root_combos());
            if scm.roots.iter().zip(&r).any(|(&root, &val)| world[root] != val) {
                return Err(Error::InvalidModel("structural function is not the identity on the roots".into()));
            }
        }
        Ok(scm)
    }

    /// Tabulates `f(u, r)` from a closure. The closure receives exogenous
    /// values and root values (in root order) and returns every endogenous value.
    pub fn from_fn<F>(endo: Vec<VarSpec>, exo: Vec<VarSpec>, edges: Vec<(usize, usize)>, p_u: Vec<f64>, mut f: F) -> Result<Self>
    where
        F: FnMut(&[usize], &[usize]) -> Vec<usize>,
    {
        let graph = CausalGraph::new(endo.len(), edges.iter().copied());
        let roots = graph.roots();
        let root_sizes: Vec<usize> = roots.iter().map(|&r| endo[r].size()).collect();
        let exo_sizes: Vec<usize> = exo.iter().map(VarSpec::size).collect();
        let mut responses = Vec::new();
        for u in odometer(&exo_sizes) {
            for r in odometer(&root_sizes) {
                responses.push(f(&u, &r));
            }
        }
        DetScm::new(endo, exo, edges, p_u, responses)
    }

    pub fn endo(&self) -> &[VarSpec] {
        &self.endo
    }

    pub fn exo(&self) -> &[VarSpec] {
        &self.exo
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn p_u(&self) -> &[f64] {
        &self.p_u
    }

    pub fn responses(&self) -> &[Vec<usize>] {
        &self.responses
    }

    /// True when some exogenous value has zero weight. Such models fall
    /// outside the positivity requirement but are accepted for illustration.
    pub fn is_boundary(&self) -> bool {
        self.p_u.contains(&0.0)
    }

    pub fn root_combos(&self) -> usize {
        self.roots.iter().map(|&r| self.endo[r].size()).product()
    }

    fn root_sizes(&self) -> Vec<usize> {
        self.roots.iter().map(|&r| self.endo[r].size()).collect()
    }

    fn root_digits(&self, mut index: usize) -> Vec<usize> {
        let sizes = self.root_sizes();
        let mut digits = vec![0; sizes.len()];
        for (slot, size) in sizes.iter().enumerate().rev() {
            digits[slot] = index % size;
            index /= size;
        }
        digits
    }

    /// Joint exogenous values for a joint index.
    pub fn u_values(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.exo.len()];
        for (slot, var) in self.exo.iter().enumerate().rev() {
            digits[slot] = index % var.size();
            index /= var.size();
        }
        digits
    }

    fn u_index(&self, u: &[usize]) -> Result<usize> {
        if u.len() != self.exo.len() || u.iter().zip(&self.exo).any(|(v, var)| *v >= var.size()) {
            return Err(Error::InvalidQuery("exogenous assignment does not fit the model".into()));
        }
        Ok(mixed_radix(&self.exo.iter().map(VarSpec::size).collect::<Vec<_>>(), u))
    }

    fn root_index(&self, r: &Assignment) -> Result<usize> {
        if r.0.len() != self.endo.len() {
            return Err(Error::InvalidQuery("root assignment has the wrong arity".into()));
        }
        let mut digits = Vec::with_capacity(self.roots.len());
        for &root in &self.roots {
            match r.0[root] {
                Some(v) if v < self.endo[root].size() => digits.push(v),
                _ => return Err(Error::InvalidQuery(format!("root {} is not assigned", self.endo[root].name))),
            }
        }
        for (i, v) in r.0.iter().enumerate() {
            if v.is_some() && !self.roots.contains(&i) {
                return Err(Error::InvalidQuery(format!("{} is not a root", self.endo[i].name)));
            }
        }
        Ok(mixed_radix(&self.root_sizes(), &digits))
    }

    pub fn root_assignment(&self, world: &World) -> Assignment {
        let mut out = vec![None; self.endo.len()];
        for &r in &self.roots {
            out[r] = Some(world.0[r]);
        }
        Assignment(out)
    }

    pub fn all_root_assignments(&self) -> Vec<Assignment> {
        (0..self.root_combos())
            .map(|i| {
                let mut out = vec![None; self.endo.len()];
                for (&root, d) in self.roots.iter().zip(self.root_digits(i)) {
                    out[root] = Some(d);
                }
                Assignment(out)
            })
            .collect()
    }

    fn check_world(&self, v: &World) -> Result<()> {
        if v.0.len() != self.endo.len() || v.0.iter().zip(&self.endo).any(|(x, var)| *x >= var.size()) {
            return Err(Error::InvalidQuery("world does not fit the model".into()));
        }
        Ok(())
    }

    fn response(&self, u_index: usize, root_index: usize) -> &[usize] {
        &self.responses[u_index * self.root_combos() + root_index]
    }

    /// `P(v | r)`: the mass of the exogenous values that produce `v` under `r`.
    pub fn det_conditional(&self, v: &World, r: &Assignment) -> Result<f64> {
        self.check_world(v)?;
        let ri = self.root_index(r)?;
        Ok((0..self.p_u.len())
            .filter(|&u| self.response(u, ri) == v.0.as_slice())
            .map(|u| self.p_u[u])
            .sum())
    }

    /// Observational distribution over worlds under the root values `r`.
    pub fn observational_dist(&self, r: &Assignment) -> Result<DistTable<World>> {
        let ri = self.root_index(r)?;
        Ok(DistTable::from_weights(
            (0..self.p_u.len())
                .filter(|&u| self.p_u[u] > 0.0)
                .map(|u| (World(self.response(u, ri).to_vec()), self.p_u[u])),
        ))
    }

    /// Posterior over `u` given the observed world, pushed through `f(., r*)`.
    pub fn det_counterfactual(&self, v: &World, r_star: &Assignment) -> Result<DistTable<World>> {
        self.check_world(v)?;
        let ri = self.root_index(&self.root_assignment(v))?;
        let si = self.root_index(r_star)?;
        let consistent: Vec<usize> =
            (0..self.p_u.len()).filter(|&u| self.p_u[u] > 0.0 && self.response(u, ri) == v.0.as_slice()).collect();
        let evidence: f64 = consistent.iter().map(|&u| self.p_u[u]).sum();
        if !(evidence > 0.0) {
            return Err(Error::ImpossibleEvidence);
        }
        Ok(DistTable::from_weights(
            consistent.iter().map(|&u| (World(self.response(u, si).to_vec()), self.p_u[u] / evidence)),
        ))
    }

    /// The world `f(u, r*)`.
    pub fn det_counterfactual_given_u(&self, u: &[usize], r_star: &Assignment) -> Result<World> {
        Ok(World(self.response(self.u_index(u)?, self.root_index(r_star)?).to_vec()))
    }

    /// Whether `f(u, r) = f(u', r)` for all `u, u', r`.
    pub fn is_u_irrelevant(&self) -> bool {
        (0..self.root_combos()).all(|ri| (1..self.p_u.len()).all(|u| self.response(u, ri) == self.response(0, ri)))
    }

    /// Equivalent nondeterministic model for a structural function that
    /// ignores `U`: every root points at every non-root, and each non-root
    /// CPT is the point-mass projection of `f(u0, .)`.
    pub fn to_nondet_when_u_irrelevant(&self) -> Result<NondetModel> {
        if !self.is_u_irrelevant() {
            return Err(Error::DependsOnExogenous);
        }
        let nonroots: Vec<usize> = (0..self.endo.len()).filter(|i| !self.roots.contains(i)).collect();
        let mut edges = Vec::new();
        let mut cpts: Vec<Option<Cpt>> = vec![None; self.endo.len()];
        for &y in &nonroots {
            edges.extend(self.roots.iter().map(|&r| (r, y)));
            let rows = (0..self.root_combos())
                .map(|ri| {
                    let mut row = vec![0.0; self.endo[y].size()];
                    row[self.response(0, ri)[y]] = 1.0;
                    row
                })
                .collect();
            cpts[y] = Some(Cpt::new(self.roots.clone(), rows));
        }
        NondetModel::new(self.endo.clone(), edges, cpts)
    }

    /// Structural model of a token LM in which each generated position reads
    /// one uniform through inverse-transform sampling. The uniform for
    /// position `i` is represented by the cells of the common refinement of
    /// every context's cumulative distribution at that position.
    ///
    /// Endogenous variables match [`ToyLm::compile_to_nondet`]: `X`, `T1..Tk`, `Y`.
    pub fn from_lm_inverse_transform(lm: &ToyLm, prompt_len: usize, params: &SamplingParams, cap: EnumCap) -> Result<Self> {
        let compiled = lm.compile_to_nondet(prompt_len, params, cap)?;
        let nondet = compiled.model();
        let k = lm.k();
        let n = lm.vocab().len();

        let mut exo = Vec::new();
        let mut cell_lists = Vec::new();
        for i in prompt_len + 1..=k {
            let family = odometer(&vec![n; i - 1])
                .map(|ctx| lm.next_dist(&ctx, params))
                .collect::<Result<Vec<_>>>()?;
            let cells = inverse_transform_cells(&family);
            exo.push(VarSpec::new(format!("U{i}"), cells.iter().map(|(lo, hi)| format!("[{lo},{hi})"))));
            cell_lists.push(cells);
        }
        let n_u = space_size(cell_lists.iter().map(Vec::len));
        cap.check(n_u.saturating_mul(compiled.prompts().len() as u128))?;

        let p_u: Vec<f64> = odometer(&cell_lists.iter().map(Vec::len).collect::<Vec<_>>())
            .map(|digits| digits.iter().zip(&cell_lists).map(|(&d, cells)| cells[d].1 - cells[d].0).product())
            .collect();
        let total: f64 = p_u.iter().sum();
        let p_u: Vec<f64> = p_u.into_iter().map(|p| p / total).collect();

        let edges: Vec<(usize, usize)> = nondet.graph().edges().collect();
        let prompts = compiled.prompts().to_vec();
        let mut failure = None;
        let scm = DetScm::from_fn(nondet.vars().to_vec(), exo, edges, p_u, |u, r| {
            let mut tokens = prompts[r[0]].ids().to_vec();
            for (slot, i) in (prompt_len + 1..=k).enumerate() {
                let lo = cell_lists[slot][u[slot]].0;
                match lm.next_dist(&tokens, params) {
                    Ok(next) => tokens.push(inverse_transform_index(&next, lo)),
                    Err(e) => {
                        failure.get_or_insert(e);
                        tokens.push(0);
                    }
                }
                debug_assert_eq!(tokens.len(), i);
            }
            let mut world = vec![r[0]];
            world.extend(&tokens);
            world.push(tokens.iter().fold(0, |acc, &t| acc * n + t));
            world
        });
        match failure {
            Some(e) => Err(e),
            None => scm,
        }
    }
}

#[cfg(test)]
mod tests;
