//! Counterfactual generation for toy autoregressive token models.
//!
//! The crate models a token sampler two ways: as a nondeterministic causal
//! model, where probabilities are primitive, and as a deterministic structural
//! model, where randomness is pushed onto exogenous noise. It computes
//! counterfactual outputs exactly by enumeration under four semantics (simple,
//! Gumbel-max noise reuse, inverse-transform noise reuse, and the
//! counterfactually stable distribution) and ships a brute-force oracle that
//! checks the relations between them on small instances.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cap;
pub mod cf;
pub mod det_scm;
pub mod dist;
pub mod error;
pub mod oracle;
pub mod nondet;
pub mod rng;
pub mod token_model;

pub use cap::{EnumCap, DEFAULT_ENUM_CAP};
pub use dist::{tvd, DistTable};
pub use error::{Error, Result};
