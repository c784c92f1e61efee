use alloc::string::String;
use core::fmt;

/// Errors raised by the adaptation pipeline.
///
/// Messages never carry passkey bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid parameter or inconsistent configuration.
    Config(String),
    /// Malformed serialized data.
    Format(String),
    /// Two artifacts that must agree in shape do not.
    Consistency(String),
    /// Adaptation could not complete (e.g. unresolvable cipher collision).
    Adaptation(String),
    /// Client/server token stream disagreement.
    Protocol(String),
    Training(String),
    Evaluation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Consistency(m) => write!(f, "consistency error: {m}"),
            Error::Adaptation(m) => write!(f, "adaptation error: {m}"),
            Error::Protocol(m) => write!(f, "protocol error: {m}"),
            Error::Training(m) => write!(f, "training error: {m}"),
            Error::Evaluation(m) => write!(f, "evaluation error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
