//! Rewriting a family of next-token distributions as a deterministic response
//! of a fresh exogenous variable.
//!
//! The input is one distribution per parent context (all over the same token
//! set). The output lists the exogenous cells, their weights, and the token
//! each cell produces in each context. Every construction is checked on the
//! way out: for each context, the weight of the cells producing a token must
//! equal that token's probability.

use serde::Serialize;

use crate::dist::NORMALIZATION_TOL;
use crate::error::{Error, Result};
use crate::nondet::odometer;
use crate::token_model::inverse_transform_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExoMethod {
    /// One exogenous value per response function (context -> token).
    Canonical,
    /// A uniform on `[0, 1)` read through the cumulative distribution.
    InverseTransform,
    /// Gumbel noise per token, argmax of log-probability plus noise.
    Gumbel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExoCell {
    pub label: String,
    pub weight: f64,
    /// Token produced in each context.
    pub response: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExoFragment {
    pub method: ExoMethod,
    pub cells: Vec<ExoCell>,
}

impl ExoFragment {
    /// Reconstructed distribution in context `ctx`: `sum_u P(u) 1{g(u, ctx) = t}`.
    pub fn marginal(&self, ctx: usize, vocab: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab];
        for cell in &self.cells {
            out[cell.response[ctx]] += cell.weight;
        }
        out
    }
}

/// Cells of the common refinement of every context's cumulative
/// distribution, as half-open intervals covering `[0, 1)`.
pub fn inverse_transform_cells(family: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let mut points = vec![0.0, 1.0];
    for dist in family {
        let mut cum = 0.0;
        for p in dist {
            cum += p;
            if cum > 0.0 && cum < 1.0 {
                points.push(cum);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.windows(2).map(|w| (w[0], w[1])).filter(|(lo, hi)| hi > lo).collect()
}

pub fn exogenize(family: &[Vec<f64>], method: ExoMethod) -> Result<ExoFragment> {
    let vocab = family.first().map(Vec::len).ok_or_else(|| Error::InvalidQuery("no contexts".into()))?;
    for dist in family {
        if dist.len() != vocab {
            return Err(Error::InvalidQuery("contexts disagree on the token set".into()));
        }
        let total: f64 = dist.iter().sum();
        if dist.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidQuery("step distribution is not normalized".into()));
        }
    }
    let cells = match method {
        ExoMethod::Canonical => odometer(&vec![vocab; family.len()])
            .enumerate()
            .map(|(i, response)| ExoCell {
                label: format!("type{i}"),
                weight: response.iter().zip(family).map(|(&t, dist)| dist[t]).product(),
                response,
            })
            .collect(),
        ExoMethod::InverseTransform => inverse_transform_cells(family)
            .into_iter()
            .map(|(lo, hi)| ExoCell {
                label: format!("[{lo},{hi})"),
                weight: hi - lo,
                response: family.iter().map(|dist| inverse_transform_index(dist, lo)).collect(),
            })
            .collect(),
        ExoMethod::Gumbel => {
            // With a single context the argmax of a Gumbel-perturbed
            // log-probability is distributed exactly as the context itself.
            // The joint response law across several contexts has no finite
            // closed form.
            if family.len() != 1 {
                return Err(Error::Unsupported(
                    "Gumbel exogenization is tabulated for a single context only".into(),
                ));
            }
            (0..vocab)
                .filter(|&t| family[0][t] > 0.0)
                .map(|t| ExoCell { label: format!("argmax={t}"), weight: family[0][t], response: vec![t] })
                .collect()
        }
    };
    let fragment = ExoFragment { method, cells };
    for (ctx, dist) in family.iter().enumerate() {
        let rebuilt = fragment.marginal(ctx, vocab);
        if rebuilt.iter().zip(dist).any(|(a, b)| (a - b).abs() > NORMALIZATION_TOL) {
            return Err(Error::InvalidModel(format!("exogenization does not reproduce context {ctx}")));
        }
    }
    Ok(fragment)
}
