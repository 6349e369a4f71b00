use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarmonicsError {
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(usize),
    #[error("grid has {got} samples per channel, expected {expected} for bandwidth {bandwidth}")]
    GridShape {
        bandwidth: usize,
        expected: usize,
        got: usize,
    },
    #[error("bandwidth mismatch: {0} vs {1}")]
    BandwidthMismatch(usize, usize),
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(usize, usize),
    #[error("malformed coefficient layout: {0}")]
    Layout(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarmonicsError>;
