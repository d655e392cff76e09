//! Counterfactual generators for token models.
//!
//! Four ways to answer "what would the output have been under prompt `x*`,
//! given that prompt `x` produced `y`":
//!
//! - simple: ignore `(x, y)` and sample from `P(Y | X = x*)`;
//! - Gumbel-max: record (or infer) per-position Gumbel noise for the factual
//!   run and replay it under the counterfactual contexts;
//! - inverse transform: the same with one uniform per position;
//! - stable: the exact counterfactually stable distribution, which removes
//!   at every position the tokens whose probability ratio did not grow more
//!   than the factual token's.
//!
//! Noise is indexed by position, never by context, and every trace carries
//! one entry for each of the `k` positions (prompt positions included).

mod stable;
mod trace;

use rand::Rng;

use crate::cap::EnumCap;
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::rng::{seeded, standard_gumbel, truncated_gumbel, uniform};
use crate::token_model::{argmax, inverse_transform_index, inverse_transform_interval, SamplingParams, ToyLm, TokenSeq};

pub use stable::{excluded_set, stability_check, stable_cf_dist, stable_step, PositionReport, StabilityReport};
pub use trace::{NoiseKind, TraceFile};

/// Retries allowed when rounding breaks a posterior noise draw.
const POSTERIOR_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfQuery {
    pub x: TokenSeq,
    pub y: TokenSeq,
    pub x_star: TokenSeq,
}

impl CfQuery {
    pub fn new(x: TokenSeq, y: TokenSeq, x_star: TokenSeq) -> Result<Self> {
        if !y.starts_with(&x) {
            return Err(Error::InvalidQuery("factual output does not extend the prompt".into()));
        }
        Ok(CfQuery { x, y, x_star })
    }

    /// Parses space-separated token strings against the model's vocabulary.
    pub fn parse(lm: &ToyLm, x: &str, y: &str, x_star: &str) -> Result<Self> {
        let v = lm.vocab();
        Self::new(v.parse(x)?, v.parse(y)?, v.parse(x_star)?)
    }

    pub fn check(&self, lm: &ToyLm) -> Result<()> {
        for s in [&self.x, &self.y, &self.x_star] {
            if s.len() > lm.k() {
                return Err(Error::InvalidQuery(format!("sequence of length {} exceeds k = {}", s.len(), lm.k())));
            }
        }
        self.check_aligned()
    }

    pub fn check_aligned(&self) -> Result<()> {
        if self.x.len() != self.x_star.len() {
            return Err(Error::LengthMismatch { factual: self.x.len(), counterfactual: self.x_star.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseRecord {
    /// One Gumbel vector over the vocabulary per position.
    Gumbel(Vec<Vec<f64>>),
    /// One uniform on `[0, 1)` per position.
    Uniform(Vec<f64>),
}

impl NoiseRecord {
    pub fn len(&self) -> usize {
        match self {
            NoiseRecord::Gumbel(g) => g.len(),
            NoiseRecord::Uniform(u) => u.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NoiseRecord::Gumbel(_) => "gumbel",
            NoiseRecord::Uniform(_) => "uniform",
        }
    }

    fn check(&self, lm: &ToyLm) -> Result<()> {
        let n = lm.vocab().len();
        let ok = match self {
            NoiseRecord::Gumbel(g) => g.len() == lm.k() && g.iter().all(|v| v.len() == n && v.iter().all(|x| x.is_finite())),
            NoiseRecord::Uniform(u) => u.len() == lm.k() && u.iter().all(|x| (0.0..1.0).contains(x)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidQuery(format!("{} noise does not fit the model", self.kind())))
        }
    }

    /// Token chosen at position `i` (zero based) from the step distribution.
    fn pick(&self, i: usize, probs: &[f64]) -> usize {
        match self {
            NoiseRecord::Gumbel(g) => gumbel_argmax(probs, &g[i]),
            NoiseRecord::Uniform(u) => inverse_transform_index(probs, u[i]),
        }
    }
}

fn gumbel_argmax(probs: &[f64], gumbels: &[f64]) -> usize {
    let scores: Vec<f64> = probs.iter().zip(gumbels).map(|(p, g)| p.ln() + g).collect();
    argmax(&scores)
}

/// A factual run together with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FactualTrace {
    pub x: TokenSeq,
    pub y: TokenSeq,
    pub noise: NoiseRecord,
    pub params: SamplingParams,
}

impl FactualTrace {
    /// Builds a trace, checking that the noise regenerates `y`.
    pub fn new(lm: &ToyLm, x: TokenSeq, y: TokenSeq, noise: NoiseRecord, params: SamplingParams) -> Result<Self> {
        let replayed = replay(lm, &x, &noise, &params)?;
        if replayed != y {
            return Err(Error::InvalidQuery("noise does not regenerate the recorded output".into()));
        }
        Ok(FactualTrace { x, y, noise, params })
    }

    /// Output of the recorded noise on the recorded prompt.
    pub fn replay(&self, lm: &ToyLm) -> Result<TokenSeq> {
        replay(lm, &self.x, &self.noise, &self.params)
    }

    /// Output of the recorded noise on prompt `x_star` under `params`.
    pub fn counterfactual(&self, lm: &ToyLm, x_star: &TokenSeq, params: &SamplingParams) -> Result<TokenSeq> {
        if x_star.len() != self.x.len() {
            return Err(Error::LengthMismatch { factual: self.x.len(), counterfactual: x_star.len() });
        }
        replay(lm, x_star, &self.noise, params)
    }
}

fn replay(lm: &ToyLm, x: &TokenSeq, noise: &NoiseRecord, params: &SamplingParams) -> Result<TokenSeq> {
    params.validate()?;
    noise.check(lm)?;
    if x.len() > lm.k() {
        return Err(Error::InvalidQuery(format!("prompt of length {} exceeds k = {}", x.len(), lm.k())));
    }
    let mut seq = x.ids().to_vec();
    for i in x.len()..lm.k() {
        let probs = lm.next_dist(&seq, params)?;
        seq.push(noise.pick(i, &probs));
    }
    TokenSeq::new(seq)
}

/// One draw from `P(Y | X = x*)`; the factual pair plays no role.
pub fn simple_cf_sample(lm: &ToyLm, q: &CfQuery, params: &SamplingParams, seed: u64) -> Result<TokenSeq> {
    lm.sample_output(&q.x_star, params, &mut seeded(seed))
}

/// `P(Y | X = x*)` in full.
pub fn simple_cf_dist(lm: &ToyLm, q: &CfQuery, params: &SamplingParams, cap: EnumCap) -> Result<DistTable<TokenSeq>> {
    lm.seq_dist(&q.x_star, params, cap)
}

fn gumbel_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_gumbel(rng)).collect()
}

pub fn gumbel_factual_run(lm: &ToyLm, x: &TokenSeq, params: &SamplingParams, seed: u64) -> Result<(TokenSeq, FactualTrace)> {
    let mut rng = seeded(seed);
    let noise = NoiseRecord::Gumbel((0..lm.k()).map(|_| gumbel_vector(&mut rng, lm.vocab().len())).collect());
    let y = replay(lm, x, &noise, params)?;
    Ok((y.clone(), FactualTrace { x: x.clone(), y, noise, params: *params }))
}

pub fn its_factual_run(lm: &ToyLm, x: &TokenSeq, params: &SamplingParams, seed: u64) -> Result<(TokenSeq, FactualTrace)> {
    let mut rng = seeded(seed);
    let noise = NoiseRecord::Uniform((0..lm.k()).map(|_| uniform(&mut rng)).collect());
    let y = replay(lm, x, &noise, params)?;
    Ok((y.clone(), FactualTrace { x: x.clone(), y, noise, params: *params }))
}

/// Factual step distributions along `y`, one per generated position
/// (position index, distribution, observed token). Errors if `y` is impossible.
fn factual_steps(lm: &ToyLm, x: &TokenSeq, y: &TokenSeq, params: &SamplingParams) -> Result<Vec<(usize, Vec<f64>, usize)>> {
    if lm.seq_prob(x, y, params)? <= 0.0 {
        return Err(Error::ImpossibleEvidence);
    }
    let padded = y.padded(lm.k());
    (x.len()..lm.k())
        .map(|i| Ok((i, lm.next_dist(&padded[..i], params)?, padded[i])))
        .collect()
}

/// Gumbel vector whose perturbed argmax is `token`. The maximum is drawn
/// first, with location at the log-sum-exp of the logits; every other
/// finite logit gets a Gumbel truncated below that maximum, and impossible
/// tokens get unconstrained noise.
fn gumbel_given_argmax<R: Rng + ?Sized>(rng: &mut R, probs: &[f64], token: usize) -> Result<Vec<f64>> {
    let logits: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    for _ in 0..POSTERIOR_RETRIES {
        let max = lse + standard_gumbel(rng);
        let g: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                if j == token {
                    max - l
                } else if l == f64::NEG_INFINITY {
                    standard_gumbel(rng)
                } else {
                    truncated_gumbel(rng, l, max) - l
                }
            })
            .collect();
        if g.iter().all(|v| v.is_finite()) && gumbel_argmax(probs, &g) == token {
            return Ok(g);
        }
    }
    Err(Error::InvalidQuery(format!("could not draw Gumbel noise selecting token {token}")))
}

/// Noise drawn from its posterior given the observed output `y`.
pub fn gumbel_posterior_noise(lm: &ToyLm, x: &TokenSeq, y: &TokenSeq, params: &SamplingParams, seed: u64) -> Result<FactualTrace> {
    let steps = factual_steps(lm, x, y, params)?;
    let mut rng = seeded(seed);
    let n = lm.vocab().len();
    let mut noise: Vec<Vec<f64>> = (0..x.len()).map(|_| gumbel_vector(&mut rng, n)).collect();
    for (_, probs, token) in &steps {
        noise.push(gumbel_given_argmax(&mut rng, probs, *token)?);
    }
    FactualTrace::new(lm, x.clone(), y.clone(), NoiseRecord::Gumbel(noise), *params)
}

/// Uniforms drawn from their posterior: each one uniform on the interval
/// that selects the observed token.
pub fn its_posterior_noise(lm: &ToyLm, x: &TokenSeq, y: &TokenSeq, params: &SamplingParams, seed: u64) -> Result<FactualTrace> {
    let steps = factual_steps(lm, x, y, params)?;
    let mut rng = seeded(seed);
    let mut noise: Vec<f64> = (0..x.len()).map(|_| uniform(&mut rng)).collect();
    for (_, probs, token) in &steps {
        let (lo, hi) = inverse_transform_interval(probs, *token);
        let u = (0..POSTERIOR_RETRIES)
            .map(|_| lo + (hi - lo) * uniform(&mut rng))
            .find(|&u| u < 1.0 && inverse_transform_index(probs, u) == *token)
            .ok_or_else(|| Error::InvalidQuery(format!("could not draw a uniform selecting token {token}")))?;
        noise.push(u);
    }
    FactualTrace::new(lm, x.clone(), y.clone(), NoiseRecord::Uniform(noise), *params)
}

fn check_kind(trace: &FactualTrace, kind: &str) -> Result<()> {
    if trace.noise.kind() != kind {
        return Err(Error::InvalidQuery(format!("expected a {kind} trace, got {}", trace.noise.kind())));
    }
    Ok(())
}

/// Replays the trace's Gumbel noise on `x_star`.
pub fn gumbel_cf_sample(lm: &ToyLm, trace: &FactualTrace, x_star: &TokenSeq, params: &SamplingParams) -> Result<TokenSeq> {
    check_kind(trace, "gumbel")?;
    trace.counterfactual(lm, x_star, params)
}

/// Replays the trace's uniforms on `x_star`.
pub fn its_cf_sample(lm: &ToyLm, trace: &FactualTrace, x_star: &TokenSeq, params: &SamplingParams) -> Result<TokenSeq> {
    check_kind(trace, "uniform")?;
    trace.counterfactual(lm, x_star, params)
}

/// Exact distribution of [`its_cf_sample`] when the trace comes from
/// [`its_posterior_noise`]: each uniform ranges over the interval that picked
/// the factual token, and the counterfactual token at a position is the
/// share of that interval covered by each token's cell at the
/// counterfactual context.
pub fn its_cf_dist(
    lm: &ToyLm,
    q: &CfQuery,
    factual_params: &SamplingParams,
    cf_params: &SamplingParams,
    cap: EnumCap,
) -> Result<DistTable<TokenSeq>> {
    q.check(lm)?;
    cf_params.validate()?;
    cap.check(crate::cap::space_size(std::iter::repeat_n(lm.vocab().len(), lm.k() - q.x.len())))?;
    let intervals: Vec<(f64, f64)> = factual_steps(lm, &q.x, &q.y, factual_params)?
        .iter()
        .map(|(_, probs, token)| inverse_transform_interval(probs, *token))
        .collect();
    let mut out = Vec::new();
    let mut prefix = q.x_star.ids().to_vec();
    its_expand(lm, cf_params, &intervals, &mut prefix, 1.0, &mut out)?;
    Ok(DistTable::from_weights(out))
}

fn its_expand(
    lm: &ToyLm,
    params: &SamplingParams,
    intervals: &[(f64, f64)],
    prefix: &mut Vec<usize>,
    p: f64,
    out: &mut Vec<(TokenSeq, f64)>,
) -> Result<()> {
    let Some(&(lo, hi)) = intervals.first() else {
        out.push((TokenSeq::new(prefix.clone())?, p));
        return Ok(());
    };
    let probs = lm.next_dist(prefix, params)?;
    for t in (0..probs.len()).filter(|&t| probs[t] > 0.0) {
        let (a, b) = inverse_transform_interval(&probs, t);
        let overlap = (hi.min(b) - lo.max(a)).max(0.0) / (hi - lo);
        if overlap > 0.0 {
            prefix.push(t);
            its_expand(lm, params, &intervals[1..], prefix, p * overlap, out)?;
            prefix.pop();
        }
    }
    Ok(())
}
