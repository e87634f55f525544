//! Tools for deciding universality of holonomic quantum computation models.
//!
//! The library computes the holonomy algebra of a non-Abelian connection over
//! a real parameter space by spanning curvature and iterated covariant
//! derivatives, integrates path-ordered holonomies along loops, and ships the
//! two-qubit Optical Holonomic Computer both as an analytic built-in model and
//! as a first-principles truncated-Fock-space oracle.

pub mod connection;
pub mod fock;
pub mod holalg;
pub mod matcore;
pub mod models;
pub mod transport;
pub mod verify;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("matrix is not anti-Hermitian (defect {defect:.3e})")]
    NotAntiHermitian { defect: f64 },
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("singular matrix")]
    Singular,
    #[error("logarithm branch ambiguity: eigenvalue within {dist:.3e} of -1")]
    LogBranch { dist: f64 },
    #[error("frame is not orthonormal (defect {defect:.3e})")]
    FrameNotOrthonormal { defect: f64 },
    #[error("span is not closed under brackets (worst residual {residual:.3e})")]
    NotBracketClosed { residual: f64 },
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("loop error: {0}")]
    Loop(String),
    #[error("parameter out of range: {0}")]
    ParamRange(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
