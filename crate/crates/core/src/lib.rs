//! Synthesis of margin-propagation (MP) analog computing circuits from
//! factor graphs.
//!
//! The flow has five stages, each in its own module:
//!
//! 1. [`graph_ir`]: factor graphs from Bayesian networks, parity-check
//!    matrices or user tables.
//! 2. [`compute_graph`]: variable elimination into an arithmetic DAG,
//!    simplification, exact evaluation and the brute-force oracle.
//! 3. [`analog_map`]: mapping onto the MP standard-cell library.
//! 4. [`netlist`]: SPICE-dialect emission and parsing.
//! 5. [`sim`]: behavioral DC solve, cyclic settling and the message-passing
//!    decoder.
//!
//! [`mp_kernel`] holds the numerical MP primitives shared by stages 3-5 and
//! [`apps`] wires everything into the Bayesian-network, LDPC and ANN
//! harnesses.

pub mod analog_map;
pub mod apps;
pub mod compute_graph;
pub mod error;
pub mod graph_ir;
pub mod mp_kernel;
pub mod netlist;
pub mod sim;

pub use error::{Error, Result};

/// Evaluation mode shared by the cell behaviors, the simulator and the
/// harnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Ideal arithmetic.
    #[default]
    Exact,
    /// Margin-propagation behavioral approximation.
    Mp,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "mp" => Ok(Mode::Mp),
            other => Err(Error::Invalid(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "EXACT",
            Mode::Mp => "MP",
        })
    }
}
