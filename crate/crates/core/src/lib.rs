//! Structure learning for binary r-wise Markov random fields.
//!
//! The classical path learns each vertex neighborhood with the Sparsitron
//! multiplicative-weights learner, peeling maximal monomials level by level.
//! The [`qsim`] module simulates the quantum variant of the same pipeline at
//! the oracle level and keeps a query ledger for cost comparisons.

pub mod error;
pub mod poly;
pub mod sampler;
pub mod sparsitron;
pub mod strings;
pub mod learn;
pub mod qsim;
pub mod harness;

pub use error::{Error, Result};
pub use poly::{mono, Monomial, MrfModel, MultilinearPolynomial};
