use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A budget step has no solution for the given inputs.
    #[error("infeasible at step `{step}`: {detail}")]
    Infeasible { step: &'static str, detail: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("reference waveform has zero power")]
    ZeroPowerReference,

    #[error("invalid frequency band [{lo}, {hi}] Hz for sample rate {sample_rate} Hz")]
    InvalidBand { lo: f64, hi: f64, sample_rate: f64 },

    /// Input drive is past the amplifier's 1 dB compression point.
    #[error("input {p_in_dbm:.2} dBm exceeds the compression limit {limit_dbm:.2} dBm")]
    Saturation { p_in_dbm: f64, limit_dbm: f64 },

    #[error("amplifier model `{0}` does not support this operation")]
    UnsupportedModel(&'static str),

    #[error("table schema mismatch: {0}")]
    SchemaMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
