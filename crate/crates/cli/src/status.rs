//! Exit codes and the errors that select them.

use std::fmt;

pub const PASS: u8 = 0;
pub const OTHER: u8 = 1;
pub const CONFIG: u8 = 2;
pub const NUMERIC: u8 = 3;
pub const CHECKS: u8 = 4;
/// The requested evaluation does not fit the assignment solver.
pub const BUDGET: u8 = 5;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    ChecksFailed,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::ChecksFailed
        }
    }

    pub fn and(self, other: Status) -> Status {
        Status::from_pass(self == Status::Pass && other == Status::Pass)
    }

    pub fn code(self) -> u8 {
        match self {
            Status::Pass => PASS,
            Status::ChecksFailed => CHECKS,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// An artifact directory that lacks a required report.
#[derive(Debug)]
pub struct Incomplete(pub String);

impl fmt::Display for Incomplete {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "incomplete run: {}", self.0)
    }
}

impl std::error::Error for Incomplete {}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return CONFIG;
        }
        if cause.is::<Incomplete>() {
            return CHECKS;
        }
        if let Some(e) = cause.downcast_ref::<linflow::Error>() {
            use linflow::Error::*;
            return match e {
                InvalidTarget(_) | InvalidArgument(_) | DimensionMismatch { .. } | TimeOutOfRange(_) | Json(_) => CONFIG,
                NonFinite { .. } | Diverged { .. } => NUMERIC,
                BudgetExceeded { .. } => BUDGET,
                Io(_) | Csv(_) => OTHER,
            };
        }
    }
    OTHER
}
