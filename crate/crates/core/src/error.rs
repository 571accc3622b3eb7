//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation needed more agents than the flock contains.
    TooFewAgents { required: usize, actual: usize },
    /// A neighbor query asked for more neighbors than exist.
    NeighborCount { requested: usize, available: usize },
    /// Two agents occupy exactly the same position where an inverse-square
    /// term is evaluated.
    CoincidentAgents { i: usize, j: usize },
    /// Initial-state sampling exceeded its rejection cap; the sampling box is
    /// too small for the requested flock.
    SamplerRejectionCap { attempts: usize },
    /// A feature encoding or cost needed an observable (obstacles, target,
    /// predator) that the state does not carry.
    MissingObservable(&'static str),
    /// Vector length does not match the expected width.
    WidthMismatch { expected: usize, actual: usize },
    /// Training loss became non-finite (divergence signal).
    NonFiniteLoss { epoch: usize },
    /// Numeric state became non-finite during integration.
    Divergence(&'static str),
    /// A parameter violates its documented invariant.
    InvalidParam(String),
    /// An aggregate operation was handed an empty collection.
    EmptySet(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TooFewAgents { required, actual } => {
                write!(f, "needs at least {required} agents, flock has {actual}")
            }
            Error::NeighborCount {
                requested,
                available,
            } => write!(
                f,
                "requested {requested} neighbors but only {available} other agents exist"
            ),
            Error::CoincidentAgents { i, j } => {
                write!(f, "agents {i} and {j} are exactly coincident")
            }
            Error::SamplerRejectionCap { attempts } => write!(
                f,
                "no recoverable configuration found in {attempts} attempts; box too small"
            ),
            Error::MissingObservable(what) => write!(f, "missing observable: {what}"),
            Error::WidthMismatch { expected, actual } => {
                write!(f, "width mismatch: expected {expected}, got {actual}")
            }
            Error::NonFiniteLoss { epoch } => {
                write!(f, "training loss became non-finite at epoch {epoch}")
            }
            Error::Divergence(what) => write!(f, "non-finite state in {what}"),
            Error::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            Error::EmptySet(what) => write!(f, "empty input: {what}"),
        }
    }
}

impl core::error::Error for Error {}
