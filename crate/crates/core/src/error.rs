use thiserror::Error;

/// Everything that can go wrong while loading a model, deriving an objective
/// or solving one of the programs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    #[error("the graph has a directed cycle through `{0}`")]
    Cyclic(String),

    #[error("exogenous node `{0}` has an incoming edge")]
    ExogenousChild(String),

    #[error("graph is not quasi-Markovian; endogenous nodes with several exogenous parents: {}", .0.join(", "))]
    NotQuasiMarkovian(Vec<String>),

    #[error("node sets must be disjoint, `{0}` appears in more than one")]
    OverlappingSets(String),

    #[error("no separator for `{y}` and the intervened set exists")]
    NoSeparator { y: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("intervened variables span several c-components ({})", .0.join(" | "))]
    SeveralInterventedComponents(Vec<String>),

    #[error("{what} needs {needed}, above the configured limit of {limit}")]
    SizeLimit {
        what: String,
        needed: String,
        limit: String,
    },

    #[error("polynomials are built over different encodings")]
    EncodingMismatch,

    #[error("pricing returned column {0}, which is already in the master problem")]
    DuplicateColumn(String),

    #[error("unsupported derivation step: {0}")]
    Unsupported(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
