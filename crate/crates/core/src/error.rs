use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A 3×3 grid cell that did not receive enough saccades to estimate a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StarvedCell {
    pub row: usize,
    pub col: usize,
    pub count: usize,
}

impl fmt::Display for StarvedCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell ({},{}) has {} usable saccades", self.row, self.col, self.count)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("starved cells ({}): {}", .0.len(), join_cells(.0))]
    StarvedCells(Vec<StarvedCell>),

    /// `step` is the index of the fixation being generated (0 outside generation).
    #[error(
        "transition map is zero everywhere at step {step}; increase amp_max or reduce the inhibition radius"
    )]
    DegenerateTransition { step: usize },

    #[error("{0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

fn join_cells(cells: &[StarvedCell]) -> String {
    cells.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
