//! Compilation of a [`ToyLm`] into a nondeterministic causal model.
//!
//! Variables, in index order: the prompt `X` (the only root, one value per
//! prompt of the fixed length `l`), the token positions `T1..Tk`, and the
//! output `Y`. `Ti` copies the i-th prompt token for `i <= l`; later positions
//! depend on every earlier position through the LM's next-token distribution;
//! `Y` is the deterministic concatenation of all positions.

use super::{SamplingParams, ToyLm, TokenSeq, EMPTY};
use crate::cap::{space_size, EnumCap};
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::nondet::{odometer, Assignment, Cpt, NondetModel, VarSpec, World};

#[derive(Debug, Clone)]
pub struct CompiledLm {
    model: NondetModel,
    prompt_len: usize,
    k: usize,
    vocab_size: usize,
    prompts: Vec<TokenSeq>,
}

fn point_mass(size: usize, at: usize) -> Vec<f64> {
    let mut row = vec![0.0; size];
    row[at] = 1.0;
    row
}

impl CompiledLm {
    pub(super) fn new(lm: &ToyLm, prompt_len: usize, params: &SamplingParams, cap: EnumCap) -> Result<Self> {
        params.validate()?;
        let k = lm.k();
        if prompt_len >= k {
            return Err(Error::InvalidQuery(format!("prompt length {prompt_len} must be below k = {k}")));
        }
        let n = lm.vocab().len();
        let prompts = lm.prompts_of_len(prompt_len);
        cap.check(space_size(
            std::iter::once(prompts.len()).chain(std::iter::repeat_n(n, k)).chain(std::iter::once(n.pow(k as u32))),
        ))?;

        let render = |ids: &[usize]| lm.vocab().render_ids(ids).join(",");
        let mut vars = vec![VarSpec::new("X", prompts.iter().map(|p| render(p.ids())))];
        for i in 1..=k {
            vars.push(VarSpec::new(format!("T{i}"), lm.vocab().tokens().iter().cloned()));
        }
        let outputs: Vec<Vec<usize>> = odometer(&vec![n; k]).collect();
        vars.push(VarSpec::new("Y", outputs.iter().map(|o| render(o))));

        let mut edges = Vec::new();
        let mut cpts: Vec<Option<Cpt>> = vec![None];
        for i in 1..=k {
            if i <= prompt_len {
                edges.push((0, i));
                let rows = prompts.iter().map(|p| point_mass(n, p.ids()[i - 1])).collect();
                cpts.push(Some(Cpt::new(vec![0], rows)));
            } else {
                let parents: Vec<usize> = (1..i).collect();
                edges.extend(parents.iter().map(|&p| (p, i)));
                let rows = odometer(&vec![n; i - 1])
                    .map(|ctx| lm.next_dist(&ctx, params))
                    .collect::<Result<Vec<_>>>()?;
                cpts.push(Some(Cpt::new(parents, rows)));
            }
        }
        let y = k + 1;
        edges.extend((1..=k).map(|i| (i, y)));
        let rows = (0..outputs.len()).map(|r| point_mass(outputs.len(), r)).collect();
        cpts.push(Some(Cpt::new((1..=k).collect(), rows)));

        let model = NondetModel::new(vars, edges, cpts)?;
        Ok(CompiledLm { model, prompt_len, k, vocab_size: n, prompts })
    }

    pub fn model(&self) -> &NondetModel {
        &self.model
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn prompts(&self) -> &[TokenSeq] {
        &self.prompts
    }

    pub fn y_var(&self) -> usize {
        self.k + 1
    }

    fn prompt_index(&self, x: &TokenSeq) -> Result<usize> {
        if x.len() != self.prompt_len {
            return Err(Error::LengthMismatch { factual: self.prompt_len, counterfactual: x.len() });
        }
        self.prompts
            .iter()
            .position(|p| p == x)
            .ok_or_else(|| Error::InvalidQuery("prompt is not in the compiled domain".into()))
    }

    pub fn root_for(&self, x: &TokenSeq) -> Result<Assignment> {
        let mut a = vec![None; self.k + 2];
        a[0] = Some(self.prompt_index(x)?);
        Ok(Assignment(a))
    }

    /// The world with prompt `x` whose positions spell out the output `y`.
    pub fn world_for(&self, x: &TokenSeq, y: &TokenSeq) -> Result<World> {
        if y.len() > self.k || y.ids().iter().any(|&t| t >= self.vocab_size) {
            return Err(Error::InvalidQuery("output does not fit the compiled model".into()));
        }
        let padded = y.padded(self.k);
        let mut values = vec![self.prompt_index(x)?];
        values.extend(padded.iter().copied());
        values.push(padded.iter().fold(0, |acc, &t| acc * self.vocab_size + t));
        Ok(World(values))
    }

    /// The output spelled by a world's token positions.
    pub fn output_of(&self, world: &World) -> TokenSeq {
        let tokens: Vec<usize> = world.0[1..=self.k].to_vec();
        let len = tokens.iter().position(|&t| t == EMPTY).unwrap_or(tokens.len());
        TokenSeq(tokens[..len].to_vec())
    }

    /// Marginal of a world distribution on the output.
    pub fn output_marginal(&self, dist: &DistTable<World>) -> DistTable<TokenSeq> {
        dist.map_keys(|w| self.output_of(w))
    }
}
