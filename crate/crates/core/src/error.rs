use thiserror::Error;

use crate::model::{Allocation, Class, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid allocation ({u1}, {u2}): {reason}")]
    InvalidAllocation { u1: f64, u2: f64, reason: String },

    #[error("allocation {allocation:?} is not admissible at state {state:?} (t = {time})")]
    Inadmissible {
        time: f64,
        state: State,
        allocation: Allocation,
    },

    #[error("primary queue of class {class} crosses zero inside [{lo}, {hi}]")]
    BoundaryViolation { class: Class, lo: f64, hi: f64 },

    #[error("time argument must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("horizon mismatch: trajectory covers {found}, requested {expected}")]
    HorizonMismatch { expected: f64, found: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("simulation exceeded {0} segments")]
    TooManySegments(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
