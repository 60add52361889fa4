use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Requested price lies outside the static no-arbitrage bounds, so no
    /// implied volatility exists.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// Quadrature failed to reach the requested tolerance; carries the
    /// tolerance that was actually achieved.
    #[error("quadrature did not converge (achieved tolerance {achieved:.3e})")]
    QuadratureNonConvergence { achieved: f64 },

    /// Constrained solver ran out of iterations; carries the best iterate
    /// and its KKT violation.
    #[error("solver did not converge after {iterations} iterations (KKT violation {kkt_violation:.3e})")]
    SolverNonConvergence {
        iterations: usize,
        kkt_violation: f64,
        best: Vec<f64>,
    },

    #[error("matrix decomposition failed: {0}")]
    NumericFailure(String),

    #[error("pricing failed at quote {row}, state {col}: {source}")]
    MatrixEntry {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    /// Sub-path variance integral is zero, so the return likelihood is
    /// degenerate.
    #[error("degenerate volatility path: zero integrated variance")]
    DegeneratePath,

    /// Every particle received zero likelihood.
    #[error("particle filter degenerated: all likelihoods are zero")]
    FilterDegeneracy,

    #[error("empty option chain: {0}")]
    EmptyChain(String),

    /// Strike coverage stops on one side of the forward, truncating the
    /// variance-swap replication integral.
    #[error("strike grid does not straddle the forward: missing {side} strikes")]
    ChainTruncated { side: &'static str },

    #[error("state grid carries {found} units where {expected} units are required")]
    UnitMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("put-call parity regression is invalid: {0}")]
    InvalidRegression(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed record: {0}")]
    Parse(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
