use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver, the analytics and the driver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("state has {got} values but the grid has {expected} cells")]
    StateLength { expected: usize, got: usize },

    #[error("numerical blowup: non-finite value in cell {cell}{}", stage_suffix(*.stage))]
    Blowup { cell: usize, stage: Option<usize> },

    #[error("interface {index} is not an interior interface (expected 1..={max})")]
    InterfaceOutOfRange { index: usize, max: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("singular tridiagonal system: zero pivot at row {0}")]
    SingularSystem(usize),

    #[error("invalid time-step request: {0}")]
    StepPlan(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report format error: {0}")]
    Report(String),
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(k) => format!(" (stage {k})"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
