use std::borrow::Cow;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no discovery paths")]
    NoDiscoveryPaths,

    #[error("degenerate discovery average")]
    DegenerateAverage,

    #[error("exhausted node has no bound")]
    ExhaustedNodeBound,

    #[error("precondition violated: {0}")]
    Precondition(&'static str),

    #[error("event scheduled in the past: {fire_time} < now {now}")]
    PastEvent { fire_time: f64, now: f64 },

    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid {
        field: &'static str,
        reason: Cow<'static, str>,
    },

    #[error("invalid scenario field `{field}`: {reason}")]
    Field { field: String, reason: String },

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<Cow<'static, str>>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

impl Error {
    /// True for errors caused by bad input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. } | Error::Field { .. } | Error::Parse(_)
        )
    }
}
