use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unphysical symplectic eigenvalue {0} (must be >= 1)")]
    UnphysicalEigenvalue(f64),
    #[error("index {index} out of range for {len} modes/users")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "frequency lock failure: peak-to-floor ratio {ratio:.2} below threshold {threshold:.2}"
    )]
    LockFailure { ratio: f64, threshold: f64 },
    #[error("frame sync failure: normalized correlation {corr:.3} below threshold {threshold:.3}")]
    FrameSync { corr: f64, threshold: f64 },
    #[error("pilot alignment failure: {0}")]
    Alignment(String),
    #[error("equalizer diverged: {0}")]
    StepSize(String),
    #[error("calibration frame contaminated: {0}")]
    Contamination(String),
    #[error("stale calibration: calibration frame {calibration} does not match data frame {data}")]
    StaleCalibration { calibration: u64, data: u64 },
    #[error("no signal: {0}")]
    NoSignal(String),
    #[error("SNR {snr:.5} below the reconciliation range starting at {min:.5}; no positive key")]
    InsufficientRate { snr: f64, min: f64 },
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::Numerical(_) => "numerical",
            Error::UnphysicalEigenvalue(_) => "unphysical_eigenvalue",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Unbounded(_) => "unbounded",
            Error::Config(_) => "config",
            Error::LockFailure { .. } => "lock_failure",
            Error::FrameSync { .. } => "frame_sync",
            Error::Alignment(_) => "alignment",
            Error::StepSize(_) => "step_size",
            Error::Contamination(_) => "contamination",
            Error::StaleCalibration { .. } => "stale_calibration",
            Error::NoSignal(_) => "no_signal",
            Error::InsufficientRate { .. } => "insufficient_rate",
            Error::Frame { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
