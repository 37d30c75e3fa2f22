//! Cascaded quantum-dot simulator: a source dot emitting color qubits into a
//! singly charged target dot, with detector models and estimators.

// `!(x > 0.0)` is the validation idiom here: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cascade;
pub mod detection;
pub mod emitters;
pub mod error;
pub mod scenarios;
pub mod sequencer;
pub mod quantum;

pub use error::{Error, Result};
