//! The canonical structural model of a binary `X -> Y` mechanism and the
//! bounds it implies for single-step counterfactual queries.
//!
//! With `P(Y=1 | X=1) = p` and `P(Y=1 | X=0) = q`, a four-valued `U` selects
//! one of the response types below, and any weights `(a, b, c, d)` with
//! `a + d = p` and `b + d = q` reproduce the observational behavior. The
//! feasible weights form a segment parameterized by `d`, and every
//! single-step counterfactual probability is linear in `d`, so its extremes
//! sit at the two endpoints.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::DetScm;
use crate::error::{Error, Result};
use crate::nondet::{Assignment, VarSpec, World};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResponseType {
    /// `Y = X`
    Identity,
    /// `Y = not X`
    Negation,
    /// `Y = 0`
    Zero,
    /// `Y = 1`
    One,
}

impl ResponseType {
    pub const ALL: [ResponseType; 4] = [ResponseType::Identity, ResponseType::Negation, ResponseType::Zero, ResponseType::One];

    pub fn apply(self, x: usize) -> usize {
        match self {
            ResponseType::Identity => x,
            ResponseType::Negation => 1 - x,
            ResponseType::Zero => 0,
            ResponseType::One => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ResponseType::Identity => "Y=X",
            ResponseType::Negation => "Y=notX",
            ResponseType::Zero => "Y=0",
            ResponseType::One => "Y=1",
        }
    }
}

/// The event `Y* = y_star` given `Y = y, X = x` and the intervention `X* = x_star`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BinaryQuery {
    pub x: usize,
    pub y: usize,
    pub x_star: usize,
    pub y_star: usize,
}

impl fmt::Display for BinaryQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Y*={}|Y={},X={},X*={}", self.y_star, self.y, self.x, self.x_star)
    }
}

impl FromStr for BinaryQuery {
    type Err = Error;

    /// Parses `Y*=0|Y=1,X=1,X*=0`; the conditioning terms may come in any order.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidQuery(format!("cannot parse query {s:?}; expected Y*=a|Y=b,X=c,X*=d"));
        let (head, tail) = s.split_once('|').ok_or_else(bad)?;
        let bit = |term: &str, name: &str| -> Option<usize> {
            let (lhs, rhs) = term.split_once('=')?;
            (lhs.trim() == name).then_some(())?;
            match rhs.trim() {
                "0" => Some(0),
                "1" => Some(1),
                _ => None,
            }
        };
        let y_star = bit(head, "Y*").ok_or_else(bad)?;
        let (mut x, mut y, mut x_star) = (None, None, None);
        for term in tail.split(',') {
            if let Some(v) = bit(term, "X*") {
                x_star = Some(v);
            } else if let Some(v) = bit(term, "X") {
                x = Some(v);
            } else if let Some(v) = bit(term, "Y") {
                y = Some(v);
            } else {
                return Err(bad());
            }
        }
        Ok(BinaryQuery { x: x.ok_or_else(bad)?, y: y.ok_or_else(bad)?, x_star: x_star.ok_or_else(bad)?, y_star })
    }
}

impl BinaryQuery {
    /// Value under specific type weights: posterior over the types consistent
    /// with `(x, y)`, then the mass of those mapping `x_star` to `y_star`.
    pub fn value(&self, weights: &[f64; 4]) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, w) in ResponseType::ALL.iter().zip(weights) {
            if t.apply(self.x) == self.y {
                den += w;
                if t.apply(self.x_star) == self.y_star {
                    num += w;
                }
            }
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Error::ImpossibleEvidence)
        }
    }

    /// Answer under the nondeterministic reading: `P(Y = y_star | X = x_star)`
    /// for a changed prompt, and the factual value itself otherwise.
    pub fn nondeterministic_value(&self, p: f64, q: f64) -> f64 {
        if self.x_star == self.x {
            return if self.y_star == self.y { 1.0 } else { 0.0 };
        }
        let p1 = if self.x_star == 1 { p } else { q };
        if self.y_star == 1 {
            p1
        } else {
            1.0 - p1
        }
    }
}

fn check_pq(p: f64, q: f64) -> Result<()> {
    if !(0.0 < p && p < q && q < 1.0) {
        return Err(Error::Infeasible(format!("need 0 < p < q < 1, got p={p}, q={q}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalBinaryScm {
    pub p: f64,
    pub q: f64,
    /// Weights of `Y=X`, `Y=notX`, `Y=0`, `Y=1`.
    pub weights: [f64; 4],
}

impl CanonicalBinaryScm {
    pub fn new(p: f64, q: f64, weights: [f64; 4]) -> Result<Self> {
        check_pq(p, q)?;
        let [a, b, c, d] = weights;
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Infeasible("negative type weight".into()));
        }
        if (a + b + c + d - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Infeasible("type weights do not sum to 1".into()));
        }
        if (a + d - p).abs() > WEIGHT_TOL || (b + d - q).abs() > WEIGHT_TOL {
            return Err(Error::Infeasible("type weights do not reproduce P(Y=1|X=1)=p and P(Y=1|X=0)=q".into()));
        }
        Ok(CanonicalBinaryScm { p, q, weights })
    }

    /// `P(U=0) = p`, `P(U=1) = q`, `P(U=3) = 0`; needs `p + q <= 1`.
    pub fn choice_a(p: f64, q: f64) -> Result<Self> {
        Self::new(p, q, [p, q, 1.0 - p - q, 0.0])
    }

    /// `P(U=3) = p`, `P(U=0) = 0`, `P(U=1) = q - p`.
    pub fn choice_b(p: f64, q: f64) -> Result<Self> {
        Self::new(p, q, [0.0, q - p, 1.0 - q, p])
    }

    /// Weights at a point `d = P(Y=1 type)` of the feasible segment.
    pub fn at(p: f64, q: f64, d: f64) -> Result<Self> {
        Self::new(p, q, [p - d, q - d, 1.0 - p - q + d, d])
    }

    /// Endpoints of the feasible range of `d`.
    pub fn segment(p: f64, q: f64) -> Result<(f64, f64)> {
        check_pq(p, q)?;
        Ok(((p + q - 1.0).max(0.0), p))
    }

    pub fn is_boundary(&self) -> bool {
        self.weights.contains(&0.0)
    }

    pub fn query(&self, q: &BinaryQuery) -> Result<f64> {
        q.value(&self.weights)
    }

    /// The same model as a general [`DetScm`] over `X`, `Y` and `U`.
    pub fn to_det_scm(&self) -> Result<DetScm> {
        DetScm::from_fn(
            vec![VarSpec::binary("X"), VarSpec::binary("Y")],
            vec![VarSpec::new("U", ResponseType::ALL.map(ResponseType::label))],
            vec![(0, 1)],
            self.weights.to_vec(),
            |u, r| vec![r[0], ResponseType::ALL[u[0]].apply(r[0])],
        )
    }

    /// Query evaluated through the general structural machinery.
    pub fn query_via_scm(&self, q: &BinaryQuery) -> Result<f64> {
        let scm = self.to_det_scm()?;
        let v = World(vec![q.x, q.y]);
        let r_star = Assignment(vec![Some(q.x_star), None]);
        Ok(scm.det_counterfactual(&v, &r_star)?.get(&World(vec![q.x_star, q.y_star])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsResult {
    pub lo: f64,
    pub hi: f64,
    pub arg_lo: [f64; 4],
    pub arg_hi: [f64; 4],
}

/// Range of a single-step counterfactual probability over every canonical
/// model consistent with `p` and `q`, found by evaluating both vertices of
/// the feasible segment.
pub fn counterfactual_bounds_binary(p: f64, q: f64, query: &BinaryQuery) -> Result<BoundsResult> {
    if [query.x, query.y, query.x_star, query.y_star].iter().any(|v| *v > 1) {
        return Err(Error::InvalidQuery("binary query values must be 0 or 1".into()));
    }
    let (d_lo, d_hi) = CanonicalBinaryScm::segment(p, q)?;
    let mut vertices = Vec::new();
    for d in [d_lo, d_hi] {
        let scm = CanonicalBinaryScm::at(p, q, d)?;
        vertices.push((scm.query(query)?, scm.weights));
    }
    let (lo, arg_lo) = vertices.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0)).expect("two vertices");
    let (hi, arg_hi) = vertices.iter().copied().max_by(|a, b| a.0.total_cmp(&b.0)).expect("two vertices");
    Ok(BoundsResult { lo, hi, arg_lo, arg_hi })
}
