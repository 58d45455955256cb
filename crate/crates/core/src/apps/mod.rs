//! Application harnesses: LDPC codes and BER sweeps, the MP neural network
//! and end-to-end Bayesian-network queries.

pub mod ldpc;
pub mod ann;
pub mod query;
