use thiserror::Error;

/// Errors raised by the solver, the model evaluators and the divergence kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: coordinate {coord} = {value} lies outside [{lower}, {upper}]")]
    Domain {
        what: String,
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("conditioning failed for player {player}: marginal density {marginal} at type {theta:?}")]
    Conditioning {
        player: usize,
        theta: Vec<f64>,
        marginal: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("strong concavity violated for player {player}: monotonicity quotient {quotient}")]
    Certification { player: usize, quotient: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("order condition failed: {0}")]
    OrderCondition(String),

    #[error("measures live on different supports: {0}")]
    Support(String),

    #[error("transport problem too large: {cells} cells per axis exceeds the limit of {limit}")]
    TransportSize { cells: usize, limit: usize },

    #[error("own-type marginals of the two distributions differ by {gap:e} for player {player}")]
    MarginalMismatch { player: usize, gap: f64 },

    #[error("player {player} at type {theta:?}: {source}")]
    AtNode {
        player: usize,
        theta: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_node(self, player: usize, theta: &[f64]) -> Self {
        Error::AtNode {
            player,
            theta: theta.to_vec(),
            source: Box::new(self),
        }
    }
}
