//! Classical simulation of the quantum learner: QRAM, membership circuit,
//! Grover search and counting, and the noisy quantum Sparsitron.

pub mod grover;
pub mod ledger;
pub mod membership;
pub mod oracles;
pub mod qlearn;
pub mod qram;
pub mod qsparsitron;
