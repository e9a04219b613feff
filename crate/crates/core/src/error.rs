use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Structural problem with an input file (missing header, bad shape).
    #[error("format error: {0}")]
    Format(String),

    /// A cell that could not be read as an integer. Coordinates are 1-based
    /// file line and column numbers.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// The data itself cannot support the request (single class, too few rows).
    #[error("data error: {0}")]
    Data(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed pipeline expression text.
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// An operator could not run on the data it received.
    #[error("pipeline evaluation failed: {0}")]
    Evaluation(String),

    /// No penetrance table satisfied the requested constraints.
    #[error("model generation failed: {0}")]
    Generation(String),

    #[error("simulation failed: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
