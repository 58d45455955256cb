use thiserror::Error;

/// Errors raised anywhere in the synthesis flow.
///
/// Variants are grouped by the stage that produces them so CLI diagnostics
/// can attribute a failure to a stage.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}:{line}:{col}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("cycle detected involving node `{0}`")]
    CycleDetected(String),
    #[error("malformed CPT for node `{node}`: {msg}")]
    MalformedCpt { node: String, msg: String },
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("invalid factor graph: {0}")]
    InvalidGraph(String),
    #[error("missing dataset column `{0}`")]
    MissingColumn(String),
    #[error("non-binary value `{value}` in column `{column}` (row {row}) and no threshold declared")]
    NonBinaryCell {
        column: String,
        row: usize,
        value: String,
    },
    #[error("empty dataset with zero smoothing")]
    EmptyDataset,
    #[error("invalid query: {0}")]
    Query(String),
    #[error("unbound input `{0}`")]
    UnboundInput(String),
    #[error("degenerate evidence: normalizer is zero at node {0}")]
    DegenerateEvidence(usize),
    #[error("enumeration over {n} variables exceeds the limit of {max}")]
    TooManyVariables { n: usize, max: usize },
    #[error("invalid MP input: {0}")]
    MpInput(String),
    #[error("invalid probability current: {0}")]
    InvalidCurrent(String),
    #[error("node {node} with op {op} cannot be mapped to a library cell")]
    Unmappable { node: usize, op: String },
    #[error("no {kind} variant meets target error {target}; best is {best_error} (splines {best_splines})")]
    Infeasible {
        kind: String,
        target: f64,
        best_error: f64,
        best_splines: u32,
    },
    #[error("mapped area {area} exceeds the budget of {max}")]
    AreaBudget { area: f64, max: f64 },
    #[error("cell library: {0}")]
    Library(String),
    #[error("missing metric: {0}")]
    MissingMetric(String),
    #[error("netlist: {0}")]
    Netlist(String),
    #[error("spice:{line}: {msg}")]
    SpiceParse { line: usize, msg: String },
    #[error("stimulus: {0}")]
    Stimulus(String),
    #[error("structural: {0}")]
    Structural(String),
    #[error("settling diverged after {iterations} iterations (residual trace tail {trace:?})")]
    Diverged { iterations: usize, trace: Vec<f64> },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
