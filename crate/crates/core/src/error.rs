use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("index set block {0} is empty")]
    EmptyBlock(usize),

    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("node {node}: {source}")]
    Node { node: usize, source: Box<Error> },

    #[error("degenerate residuals for node {0}: non-positive variance estimate")]
    DegenerateResiduals(usize),

    #[error("lag {lag} out of range for n = {n}")]
    InvalidLag { lag: i64, n: usize },

    #[error("r = {r} too large to materialize an r x r matrix (budget {budget} entries); use the diagonal path")]
    UseDiagonalPath { r: usize, budget: usize },

    #[error("every score column is constant; bandwidth falls back to 1")]
    BandwidthFallback,

    #[error("studentized bootstrap requires strictly positive long-run variances")]
    MissingScale,

    #[error("level {0} outside (0, 1)")]
    InvalidLevel(f64),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),

    #[error("data generation failed: {0}")]
    GenerationError(String),

    #[error("non-positive price at row {row}, symbol {symbol}")]
    InvalidPrice { row: usize, symbol: String },

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Wraps an error with the node index it came from.
    pub fn at_node(self, node: usize) -> Self {
        Error::Node {
            node,
            source: Box::new(self),
        }
    }

    /// True for errors that originate in numerical breakdowns rather than
    /// bad user input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::GenerationError(_) | Error::UseDiagonalPath { .. } => true,
            Error::Node { source, .. } => source.is_internal(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
