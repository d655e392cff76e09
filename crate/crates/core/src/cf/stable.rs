//! The counterfactually stable distribution and its per-position diagnostics.

use serde::Serialize;

use super::{factual_steps, CfQuery};
use crate::cap::{space_size, EnumCap};
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::token_model::{SamplingParams, ToyLm, TokenSeq};

/// `P(t | s*) / P(t | s)`, with `+inf` for tokens that only the
/// counterfactual context allows and `0` whenever the counterfactual
/// probability is zero.
fn ratio(factual: f64, counterfactual: f64) -> f64 {
    if counterfactual == 0.0 {
        0.0
    } else if factual == 0.0 {
        f64::INFINITY
    } else {
        counterfactual / factual
    }
}

/// Tokens other than `token` whose ratio does not exceed the ratio of `token`.
pub fn excluded_set(factual: &[f64], counterfactual: &[f64], token: usize) -> Vec<usize> {
    let pivot = ratio(factual[token], counterfactual[token]);
    (0..factual.len())
        .filter(|&t| t != token && pivot >= ratio(factual[t], counterfactual[t]))
        .collect()
}

/// Counterfactual step distribution with the excluded set removed and the
/// rest renormalized. `None` when nothing with positive mass survives.
pub fn stable_step(factual: &[f64], counterfactual: &[f64], token: usize) -> Option<Vec<f64>> {
    let excluded = excluded_set(factual, counterfactual, token);
    let kept: Vec<f64> = counterfactual
        .iter()
        .enumerate()
        .map(|(t, p)| if excluded.contains(&t) { 0.0 } else { *p })
        .collect();
    let mass: f64 = kept.iter().sum();
    (mass > 0.0).then(|| kept.into_iter().map(|p| p / mass).collect())
}

/// Exact counterfactually stable distribution over outputs of `x*`.
pub fn stable_cf_dist(lm: &ToyLm, q: &CfQuery, params: &SamplingParams, cap: EnumCap) -> Result<DistTable<TokenSeq>> {
    q.check(lm)?;
    cap.check(space_size(std::iter::repeat_n(lm.vocab().len(), lm.k() - q.x.len())))?;
    let steps = factual_steps(lm, &q.x, &q.y, params)?;
    let mut out = Vec::new();
    let mut prefix = q.x_star.ids().to_vec();
    expand(lm, params, &steps, &mut prefix, 1.0, &mut out)?;
    Ok(DistTable::from_weights(out))
}

fn expand(
    lm: &ToyLm,
    params: &SamplingParams,
    steps: &[(usize, Vec<f64>, usize)],
    prefix: &mut Vec<usize>,
    p: f64,
    out: &mut Vec<(TokenSeq, f64)>,
) -> Result<()> {
    let Some((i, factual, token)) = steps.first() else {
        out.push((TokenSeq::new(prefix.clone())?, p));
        return Ok(());
    };
    let counterfactual = lm.next_dist(prefix, params)?;
    let step = stable_step(factual, &counterfactual, *token).ok_or(Error::StableUndefined { position: i + 1 })?;
    for (t, w) in step.iter().enumerate() {
        if *w > 0.0 {
            prefix.push(t);
            expand(lm, params, &steps[1..], prefix, p * w, out)?;
            prefix.pop();
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionReport {
    /// One-based position in the output.
    pub position: usize,
    pub excluded: Vec<usize>,
    pub factual: usize,
    pub chosen: usize,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub positions: Vec<PositionReport>,
    pub violations: usize,
}

/// Flags every generated position where the counterfactual output `y_star`
/// picks a token from the excluded set.
pub fn stability_check(lm: &ToyLm, q: &CfQuery, y_star: &TokenSeq, params: &SamplingParams) -> Result<StabilityReport> {
    q.check(lm)?;
    params.validate()?;
    if !y_star.starts_with(&q.x_star) || y_star.len() > lm.k() {
        return Err(Error::InvalidQuery("counterfactual output does not extend the counterfactual prompt".into()));
    }
    let y = q.y.padded(lm.k());
    let y_star = y_star.padded(lm.k());
    let mut positions = Vec::new();
    for i in q.x.len()..lm.k() {
        let factual = lm.next_dist(&y[..i], params)?;
        let counterfactual = lm.next_dist(&y_star[..i], params)?;
        let excluded = excluded_set(&factual, &counterfactual, y[i]);
        let violation = excluded.contains(&y_star[i]);
        positions.push(PositionReport { position: i + 1, excluded, factual: y[i], chosen: y_star[i], violation });
    }
    let violations = positions.iter().filter(|p| p.violation).count();
    Ok(StabilityReport { positions, violations })
}
