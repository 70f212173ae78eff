use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rating value {0} is not a level of the equalization map")]
    UnknownLevel(f64),
    #[error("training diverged at epoch {epoch}: non-finite factor entry")]
    Diverged { epoch: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => {
        $crate::error::Error::Domain(alloc::format!($($arg)*))
    };
}
pub(crate) use domain;
