use xdloc_harmonics::HarmonicsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Train(String),
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Machine-readable category used by the command line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "E_CONFIG",
            Error::Data(_) | Error::Harmonics(_) | Error::Io(_) => "E_DATA",
            Error::Train(_) => "E_TRAIN",
            Error::Eval(_) => "E_EVAL",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn data_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}
