use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("opinion state must contain at least one agent")]
    EmptyState,

    #[error("opinion {value} of agent {index} lies outside [-1, 1]")]
    OpinionOutOfRange { index: usize, value: f64 },

    #[error("manipulator opinion {value} lies outside [-1, 1]")]
    ScheduleOutOfRange { value: f64 },

    #[error("confidence threshold must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("weight matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    WeightShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },

    #[error("weight w[{row}][{col}] = {value} lies outside [0, 1]")]
    WeightOutOfRange { row: usize, col: usize, value: f64 },

    #[error("{0} model requires a weight matrix")]
    MissingWeights(&'static str),

    #[error("agent {index} left [-1, 1] at t = {t}: {value}")]
    Escaped { index: usize, t: u64, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
