//! Toy autoregressive token models.
//!
//! A [`ToyLm`] maps a context (the tokens generated so far, prompt included)
//! to a next-token distribution over a fixed vocabulary whose index 0 is the
//! absorbing end token `</e>`. Outputs are sequences of at most `k` tokens;
//! once `</e>` is produced every later position is `</e>` too.

mod compile;
mod json;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cap::{space_size, EnumCap};
use crate::dist::{DistTable, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::rng::uniform;

pub use compile::CompiledLm;
pub use json::LmFile;

/// Index of the end token.
pub const EMPTY: usize = 0;
pub const EMPTY_TOKEN: &str = "</e>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(EMPTY_TOKEN) {
            return Err(Error::InvalidModel(format!("vocabulary must start with {EMPTY_TOKEN}")));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if !seen.insert(t) {
                return Err(Error::InvalidModel(format!("duplicate token {t}")));
            }
            if t.contains(',') || t.contains(char::is_whitespace) {
                return Err(Error::InvalidModel(format!("token {t:?} contains a separator")));
            }
        }
        Ok(Vocab { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .ok_or_else(|| Error::InvalidQuery(format!("unknown token {token:?}")))
    }

    /// Parses space-separated tokens. Trailing `</e>` tokens are dropped.
    pub fn parse(&self, text: &str) -> Result<TokenSeq> {
        TokenSeq::new(text.split_whitespace().map(|t| self.id(t)).collect::<Result<Vec<_>>>()?)
    }

    pub fn render(&self, seq: &TokenSeq) -> String {
        seq.ids().iter().map(|&i| self.tokens[i].as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn render_ids(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}

/// A token sequence in canonical form: the effective tokens only, with the
/// `</e>` padding stripped. [`TokenSeq::padded`] restores the fixed-length form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TokenSeq(Vec<usize>);

impl TokenSeq {
    /// Accepts padded or unpadded ids. Rejects a real token after `</e>`.
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        let len = ids.iter().position(|&t| t == EMPTY).unwrap_or(ids.len());
        if ids[len..].iter().any(|&t| t != EMPTY) {
            return Err(Error::InvalidQuery("token after the end token".into()));
        }
        let mut ids = ids;
        ids.truncate(len);
        Ok(TokenSeq(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// Effective length (position of the first `</e>`).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn padded(&self, k: usize) -> Vec<usize> {
        let mut out = self.0.clone();
        out.resize(k.max(out.len()), EMPTY);
        out
    }

    pub fn starts_with(&self, prefix: &TokenSeq) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

/// User-facing decoding parameters. `temperature == 0` is greedy decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub top_p: Option<f64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 1.0, top_k: None, top_p: None }
    }
}

impl SamplingParams {
    pub fn with_temperature(temperature: f64) -> Self {
        SamplingParams { temperature, ..Default::default() }
    }

    pub fn greedy() -> Self {
        Self::with_temperature(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidQuery(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.top_k == Some(0) {
            return Err(Error::InvalidQuery("top_k must be positive".into()));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidQuery(format!("top_p must lie in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub fn is_truncating(&self) -> bool {
        self.top_k.is_some() || self.top_p.is_some()
    }
}

/// Indices sorted by decreasing probability, lower index first on ties.
fn descending(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

fn renormalized(mut probs: Vec<f64>) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Lowest index among the maximal entries.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Applies temperature, then top-k, then top-p to a normalized distribution.
pub fn reshape(base: &[f64], params: &SamplingParams) -> Vec<f64> {
    let mut probs = if params.temperature == 0.0 {
        let mut out = vec![0.0; base.len()];
        out[argmax(base)] = 1.0;
        out
    } else if params.temperature == 1.0 {
        base.to_vec()
    } else {
        // p^(1/t), evaluated in log space and shifted by the max for stability.
        let logs: Vec<f64> = base.iter().map(|p| p.ln() / params.temperature).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        renormalized(logs.iter().map(|l| (l - top).exp()).collect())
    };
    if let Some(k) = params.top_k {
        let order = descending(&probs);
        for &i in order.iter().skip(k) {
            probs[i] = 0.0;
        }
        probs = renormalized(probs);
    }
    if let Some(top_p) = params.top_p {
        let order = descending(&probs);
        let mut mass = 0.0;
        let mut keep = order.len();
        for (n, &i) in order.iter().enumerate() {
            mass += probs[i];
            if mass >= top_p - 1e-12 {
                keep = n + 1;
                break;
            }
        }
        for &i in order.iter().skip(keep) {
            probs[i] = 0.0;
        }
        probs = renormalized(probs);
    }
    probs
}

/// First index whose cumulative probability exceeds `u`, in vocabulary order.
/// Falls back to the last positive entry when rounding leaves the total just
/// below `u`.
pub fn inverse_transform_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if cum > u && *p > 0.0 {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Half-open interval `[lo, hi)` of uniforms that select `token`.
pub fn inverse_transform_interval(probs: &[f64], token: usize) -> (f64, f64) {
    let lo: f64 = probs[..token].iter().sum();
    let hi = if probs[token + 1..].iter().all(|p| *p == 0.0) { 1.0 } else { lo + probs[token] };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Full context (without padding) to next-token distribution.
    Table(HashMap<Vec<usize>, Vec<f64>>),
    /// Last token to next-token distribution; the empty context uses the unigram.
    Bigram(HashMap<usize, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    vocab: Vocab,
    k: usize,
    family: Family,
    unigram: Option<Vec<f64>>,
}

impl ToyLm {
    pub fn new(vocab: Vocab, k: usize, family: Family, unigram: Option<Vec<f64>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidModel("k must be positive".into()));
        }
        let n = vocab.len();
        let check_row = |label: String, row: &[f64]| -> Result<()> {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("row {label} has {} entries, vocabulary has {n}", row.len())));
            }
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidModel(format!("row {label} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidModel(format!("row {label} sums to {total}, not 1")));
            }
            Ok(())
        };
        if let Some(u) = &unigram {
            check_row("unigram".into(), u)?;
        }
        match &family {
            Family::Table(rows) => {
                for (ctx, row) in rows {
                    if ctx.iter().any(|&t| t == EMPTY || t >= n) {
                        return Err(Error::InvalidModel(format!("table context {ctx:?} is not a valid prefix")));
                    }
                    check_row(format!("{ctx:?}"), row)?;
                }
            }
            Family::Bigram(rows) => {
                if unigram.is_none() {
                    return Err(Error::InvalidModel("bigram models need a unigram row".into()));
                }
                for (last, row) in rows {
                    if *last == EMPTY || *last >= n {
                        return Err(Error::InvalidModel(format!("bigram key {last} is not a real token")));
                    }
                    check_row(vocab.token(*last).to_string(), row)?;
                }
            }
        }
        let lm = ToyLm { vocab, k, family, unigram };
        lm.check_coverage()?;
        Ok(lm)
    }

    /// Table models without a unigram fallback must cover every context that
    /// generation can reach. Skipped when the context space is too large to list.
    fn check_coverage(&self) -> Result<()> {
        let Family::Table(rows) = &self.family else { return Ok(()) };
        if self.unigram.is_some() {
            return Ok(());
        }
        let real = self.vocab.len() - 1;
        let count: u128 = (0..self.k).map(|i| space_size(std::iter::repeat_n(real, i))).sum();
        if count > 1_000_000 {
            return Ok(());
        }
        for len in 0..self.k {
            for ctx in sequences(real, len) {
                if !rows.contains_key(&ctx) {
                    return Err(Error::InvalidModel(format!(
                        "no distribution for context {:?}",
                        self.vocab.render_ids(&ctx).join(",")
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn unigram(&self) -> Option<&[f64]> {
        self.unigram.as_deref()
    }

    /// Unreshaped next-token distribution for a context with no `</e>`.
    pub fn base_dist(&self, context: &[usize]) -> Result<&[f64]> {
        let found = match &self.family {
            Family::Table(rows) => rows.get(context),
            Family::Bigram(rows) => context.last().and_then(|t| rows.get(t)),
        };
        found
            .map(Vec::as_slice)
            .or(self.unigram.as_deref())
            .ok_or_else(|| {
                Error::InvalidModel(format!(
                    "no distribution for context {:?}",
                    self.vocab.render_ids(context).join(",")
                ))
            })
    }

    /// Next-token distribution after `context` (the padded prefix generated so
    /// far) under `params`. Any context containing `</e>` is absorbing.
    pub fn next_dist(&self, context: &[usize], params: &SamplingParams) -> Result<Vec<f64>> {
        if context.len() >= self.k {
            return Err(Error::InvalidQuery(format!(
                "context of length {} leaves no position below k = {}",
                context.len(),
                self.k
            )));
        }
        if context.iter().any(|&t| t >= self.vocab.len()) {
            return Err(Error::InvalidQuery("context token out of vocabulary".into()));
        }
        if context.contains(&EMPTY) {
            let mut out = vec![0.0; self.vocab.len()];
            out[EMPTY] = 1.0;
            return Ok(out);
        }
        Ok(reshape(self.base_dist(context)?, params))
    }

    fn check_prompt(&self, x: &TokenSeq) -> Result<()> {
        if x.len() > self.k {
            return Err(Error::InvalidQuery(format!("prompt of length {} exceeds k = {}", x.len(), self.k)));
        }
        if x.ids().iter().any(|&t| t >= self.vocab.len()) {
            return Err(Error::InvalidQuery("prompt token out of vocabulary".into()));
        }
        Ok(())
    }

    /// `P(y | x)` as a chain product over the generated positions.
    pub fn seq_prob(&self, x: &TokenSeq, y: &TokenSeq, params: &SamplingParams) -> Result<f64> {
        params.validate()?;
        self.check_prompt(x)?;
        if !y.starts_with(x) || y.len() > self.k {
            return Ok(0.0);
        }
        let padded = y.padded(self.k);
        let mut p = 1.0;
        for i in x.len()..self.k {
            p *= self.next_dist(&padded[..i], params)?[padded[i]];
            if p == 0.0 {
                break;
            }
        }
        Ok(p)
    }

    /// Exact distribution over completed outputs (prompt included) of `x`.
    pub fn seq_dist(&self, x: &TokenSeq, params: &SamplingParams, cap: EnumCap) -> Result<DistTable<TokenSeq>> {
        params.validate()?;
        self.check_prompt(x)?;
        cap.check(space_size(std::iter::repeat_n(self.vocab.len(), self.k - x.len())))?;
        let mut out = Vec::new();
        let mut prefix = x.ids().to_vec();
        self.expand(&mut prefix, 1.0, params, &mut out)?;
        Ok(DistTable::from_weights(out))
    }

    fn expand(&self, prefix: &mut Vec<usize>, p: f64, params: &SamplingParams, out: &mut Vec<(TokenSeq, f64)>) -> Result<()> {
        if prefix.len() == self.k {
            out.push((TokenSeq::new(prefix.clone())?, p));
            return Ok(());
        }
        let next = self.next_dist(prefix, params)?;
        for (t, q) in next.iter().enumerate() {
            if *q > 0.0 {
                prefix.push(t);
                self.expand(prefix, p * q, params, out)?;
                prefix.pop();
            }
        }
        Ok(())
    }

    /// One autoregressive draw. Each position uses a single uniform and the
    /// inverse-transform rule over the reshaped distribution.
    pub fn sample_output<R: Rng + ?Sized>(&self, x: &TokenSeq, params: &SamplingParams, rng: &mut R) -> Result<TokenSeq> {
        params.validate()?;
        self.check_prompt(x)?;
        let mut seq = x.ids().to_vec();
        while seq.len() < self.k {
            let next = self.next_dist(&seq, params)?;
            let t = inverse_transform_index(&next, uniform(rng));
            if t == EMPTY {
                break;
            }
            seq.push(t);
        }
        TokenSeq::new(seq)
    }

    /// Greedy completion, lowest index on ties; top-k and top-p are irrelevant here.
    pub fn zero_temp_fn(&self, x: &TokenSeq) -> Result<TokenSeq> {
        self.check_prompt(x)?;
        let greedy = SamplingParams::greedy();
        let mut seq = x.ids().to_vec();
        while seq.len() < self.k {
            let t = argmax(&self.next_dist(&seq, &greedy)?);
            if t == EMPTY {
                break;
            }
            seq.push(t);
        }
        TokenSeq::new(seq)
    }

    /// Every prompt of exactly `len` real tokens, in lexicographic id order.
    pub fn prompts_of_len(&self, len: usize) -> Vec<TokenSeq> {
        sequences(self.vocab.len() - 1, len).map(TokenSeq).collect()
    }

    pub fn compile_to_nondet(&self, prompt_len: usize, params: &SamplingParams, cap: EnumCap) -> Result<CompiledLm> {
        CompiledLm::new(self, prompt_len, params, cap)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        LmFile::from_json(text)?.build()
    }

    pub fn to_json(&self) -> String {
        LmFile::from_lm(self).to_json()
    }
}

/// All sequences of `len` real tokens (ids `1..=real`), lexicographic.
pub(crate) fn sequences(real: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let sizes = vec![real; len];
    crate::nondet::odometer(&sizes)
        .map(|digits| digits.into_iter().map(|d| d + 1).collect())
        .collect::<Vec<_>>()
        .into_iter()
}
