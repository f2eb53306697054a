use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // audio
    #[error("malformed WAV file: {0}")]
    MalformedWav(String),
    #[error("expected mono audio, found {0} channels")]
    ChannelCount(u16),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("signal of {len} samples is shorter than one frame ({frame} samples)")]
    SignalTooShort { len: usize, frame: usize },
    #[error("empty signal")]
    EmptySignal,

    // feature archive
    #[error("not an EVCF archive (bad magic)")]
    BadMagic,
    #[error("unsupported EVCF version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated archive: {0}")]
    Truncated(String),
    #[error("corrupt archive: array '{name}' declares {declared} values but carries {actual}")]
    PayloadMismatch {
        name: String,
        declared: usize,
        actual: usize,
    },
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("missing array '{0}'")]
    MissingArray(String),
    #[error("missing metadata key '{0}'")]
    MissingMetadata(String),

    // analysis / prosody
    #[error("fft size {0} is not a power of two")]
    FftSize(usize),
    #[error("warping constant {0} outside (-1, 1)")]
    Alpha(f64),
    #[error("frame count mismatch: {left} vs {right}")]
    FrameCountMismatch { left: usize, right: usize },
    #[error("contour has no voiced frames")]
    AllUnvoiced,
    #[error("non-positive F0 value {0} in a gap-free contour")]
    NonPositiveF0(f64),
    #[error("degenerate variance ({0:e}) in log-F0")]
    DegenerateVariance(f64),
    #[error("contour of {len} frames is too short (minimum {min})")]
    ContourTooShort { len: usize, min: usize },

    // neural core
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward called without a forward cache")]
    MissingCache,

    // models
    #[error("emotion id is not a one-hot vector: {0}")]
    OneHot(String),
    #[error("conditioning width {actual} does not match network width {expected}")]
    ConditionWidth { expected: usize, actual: usize },
    #[error("feature dimension {actual} does not match network dimension {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("batch of {0} frames is too small (need at least 2)")]
    BatchTooSmall(usize),
    #[error("training data contains fewer than two emotions")]
    SingleEmotion,
    #[error("unknown emotion label '{label}' (vocabulary: {vocabulary})")]
    UnknownEmotion { label: String, vocabulary: String },
    #[error("emotion vocabulary mismatch: {0}")]
    Vocabulary(String),
    #[error("checkpoint role mismatch: expected {expected}, found {actual}")]
    RoleMismatch { expected: String, actual: String },

    // configuration / manifest
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem or by damaged files, as
    /// opposed to invalid requests.
    pub fn is_io_or_corruption(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MalformedWav(_)
                | Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::Truncated(_)
                | Error::PayloadMismatch { .. }
                | Error::Corrupt(_)
        )
    }
}
