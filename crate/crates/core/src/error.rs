use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("profile violates `{constraint}` at n = {index}")]
    ProfileViolation { index: usize, constraint: Constraint },

    #[error("population overflow at generation {generation} (cap {cap})")]
    PopulationOverflow { generation: usize, cap: u64 },

    #[error("busy period exceeded cap {cap}")]
    CapExceeded { cap: u64 },

    #[error("busy period overflow at station {station} (cap {cap})")]
    BusyPeriodOverflow { station: usize, cap: u64 },

    #[error("requested value beyond computed horizon {horizon}; extend the horizon")]
    HorizonExceeded { horizon: usize },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("io: {0}")]
    Io(String),
}

/// Which of the two maximal-age constraints a profile failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// `a_{n+1} <= a_n + 1`
    StepAtMostOne,
    /// `a_n <= a_{n+1}`, required by the aging analyses.
    NonDecreasing,
    /// `d_i >= 1` for bus disciplines.
    PositiveDiscipline,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Constraint::StepAtMostOne => "a[n+1] <= a[n] + 1",
            Constraint::NonDecreasing => "a[n] <= a[n+1]",
            Constraint::PositiveDiscipline => "d[i] >= 1",
        })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
