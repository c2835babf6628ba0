use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid low-pass cutoff {cutoff} Hz for sample rate {sample_rate} Hz")]
    InvalidCutoff { cutoff: f64, sample_rate: u32 },
    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),
    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("no heartbeat period found in energy track")]
    NoPeriodFound,
    #[error("too few tones detected: {0}")]
    TooFewTones(String),
    #[error("invalid segmentation config: {0}")]
    InvalidSegmentationConfig(String),

    #[error("invalid filterbank: {0}")]
    InvalidFilterbank(String),
    #[error("invalid cepstrum spec: {0}")]
    InvalidCepstrumSpec(String),
    #[error("invalid band [{f_start}, {f_end}] Hz with {num_bins} bins at {sample_rate} Hz")]
    InvalidBand {
        f_start: f64,
        f_end: f64,
        num_bins: usize,
        sample_rate: u32,
    },
    #[error("no complete S1-S2 cycle")]
    NoCompleteCycle,
    #[error("degenerate tone power: {0}")]
    DegeneratePower(String),

    #[error("invalid structural parameters: {0}")]
    InvalidStructuralParams(String),
    #[error("quality index needs exactly 4 S1 and 4 S2 vectors, got {s1} and {s2}")]
    WrongCycleCount { s1: usize, s2: usize },
    #[error("no candidate subsequence yields 4 complete cycles")]
    NoValidSubsequence,
    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("insufficient training data: {frames} frames, need at least {needed}")]
    InsufficientData { frames: usize, needed: usize },
    #[error("non-finite feature value at frame {frame}, dim {dim}")]
    NonFiniteFeature { frame: usize, dim: usize },
    #[error("empty feature matrix")]
    EmptyFeatures,
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("empty trial set: {0}")]
    EmptyTrials(String),
    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
