//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by solver setup, factorization, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical point fell outside the velocity model's box.
    #[error("point ({0}, {1}, {2}) lies outside the model box")]
    OutsideBox(f64, f64, f64),

    /// A scalar argument violated its domain (negative depth, zero spacing, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An invalid configuration value or combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Vector or matrix dimensions do not match the operator.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A structurally unsymmetric matrix was passed where symmetry is required.
    #[error("structurally unsymmetric matrix: entry ({0}, {1}) has no transpose partner")]
    Unsymmetric(usize, usize),

    /// An exactly zero pivot during an LDL^T or LU factorization.
    #[error("singular pivot at index {index} of supernode {supernode}")]
    SingularFront { supernode: usize, index: usize },

    /// An operation was invoked in the wrong factorization state.
    #[error("operation requires {required} state, tree is {actual}")]
    State {
        required: &'static str,
        actual: &'static str,
    },

    /// A failure while building one panel's auxiliary problem.
    #[error("auxiliary problem for panel {panel}: {source}")]
    PanelSetup {
        panel: usize,
        source: Box<Error>,
    },

    /// A redistribution or distributed operand pairing that is not supported.
    #[error("unsupported distributed operation: {0}")]
    Unsupported(String),

    /// An experiment stage failure, naming the stage.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    /// Malformed external data (velocity headers, config files, ...).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
