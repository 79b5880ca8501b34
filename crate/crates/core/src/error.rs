use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A family parameter lies outside its admissible range. `field` is the
    /// dotted path of the parameter relative to the copula root, e.g.
    /// `components[1].beta`.
    #[error("{field} = {value} outside allowed range {allowed}")]
    OutOfRangeParameter {
        field: String,
        value: f64,
        allowed: &'static str,
    },

    #[error("bad mixture weights{}: {reason}", at_field(.field))]
    BadWeights { field: String, reason: String },

    #[error("mixture nesting depth {depth} exceeds the limit of {limit}")]
    NestingTooDeep { depth: usize, limit: usize },

    #[error("numerical failure in {context}: achieved error estimate {error_estimate:e}")]
    NumericalFailure {
        context: String,
        error_estimate: f64,
    },

    #[error("no convergence in {context}{}: bracket width {bracket_width:e}", at_step(.step))]
    NoConvergence {
        context: String,
        bracket_width: f64,
        step: Option<usize>,
    },

    #[error("resolution mismatch: {left} vs {right}")]
    ResolutionMismatch { left: usize, right: usize },

    #[error("invalid resolution m = {m}: {reason}")]
    InvalidResolution { m: usize, reason: &'static str },

    #[error("path of length {len} too short for resolution {m} (need at least {required})")]
    TooShort { len: usize, m: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed grid file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_field(field: &str) -> String {
    if field.is_empty() {
        String::new()
    } else {
        format!(" at {field}")
    }
}

fn at_step(step: &Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

impl Error {
    /// True for failures of numerical routines, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. } | Error::NoConvergence { .. }
        )
    }

    pub(crate) fn prefix_field(self, prefix: &str) -> Self {
        let join = |f: String| {
            if f.is_empty() {
                prefix.to_string()
            } else if f.starts_with('[') {
                format!("{prefix}{f}")
            } else {
                format!("{prefix}.{f}")
            }
        };
        match self {
            Error::OutOfRangeParameter {
                field,
                value,
                allowed,
            } => Error::OutOfRangeParameter {
                field: join(field),
                value,
                allowed,
            },
            Error::BadWeights { field, reason } => Error::BadWeights {
                field: join(field),
                reason,
            },
            other => other,
        }
    }
}
