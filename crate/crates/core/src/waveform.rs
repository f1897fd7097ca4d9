//! Sampled complex waveforms and their on-disk format.
//!
//! A waveform is stored as two files:
//!
//! * `NAME.cf64`: raw samples, interleaved `(re, im)` as little-endian
//!   IEEE-754 `f64`, no header.
//! * `NAME.cf64.json`: sidecar with the sample rate, sample count and
//!   annotations (frame boundaries and gated segments).
//!
//! ```json
//! {
//!   "format": "cf64-le",
//!   "version": 1,
//!   "sample_rate_hz": 80000000.0,
//!   "n_samples": 1000000,
//!   "annotations": {
//!     "frames": [{ "frame_id": 0, "start": 0, "len": 1000000 }],
//!     "gated": [{ "start": 900000, "end": 1000000 }]
//!   }
//! }
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "cf64-le";
pub const FORMAT_VERSION: u32 = 1;

/// Half-open sample interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.start..self.end).contains(&n)
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMark {
    pub frame_id: u64,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default)]
    pub frames: Vec<FrameMark>,
    #[serde(default)]
    pub gated: Vec<Interval>,
}

impl Annotations {
    pub fn is_gated(&self, n: usize) -> bool {
        self.gated.iter().any(|g| g.contains(n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub annotations: Annotations,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    sample_rate_hz: f64,
    n_samples: usize,
    annotations: Annotations,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
            annotations: Annotations::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Samples not covered by any gated interval.
    pub fn ungated_samples(&self) -> Vec<Complex64> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(n, _)| !self.annotations.is_gated(*n))
            .map(|(_, v)| *v)
            .collect()
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn annotations_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.sidecar())
            .map_err(|e| Error::Numerical(format!("sidecar serialization: {e}")))
    }

    fn sidecar(&self) -> Sidecar {
        Sidecar {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            sample_rate_hz: self.sample_rate_hz,
            n_samples: self.samples.len(),
            annotations: self.annotations.clone(),
        }
    }

    /// Writes the sample file at `path` and its sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for v in &self.samples {
            out.write_all(&v.re.to_le_bytes())
                .and_then(|_| out.write_all(&v.im.to_le_bytes()))
                .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        fs::write(&side, self.annotations_json()?).map_err(|e| Error::io(&side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let side_path = Self::sidecar_path(path);
        let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: side_path.clone(),
            message: e.to_string(),
        })?;
        if side.format != FORMAT_TAG || side.version != FORMAT_VERSION {
            return Err(Error::Parse {
                path: side_path,
                message: format!("unsupported format {} v{}", side.format, side.version),
            });
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != side.n_samples * 16 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!(
                    "expected {} bytes for {} samples, found {}",
                    side.n_samples * 16,
                    side.n_samples,
                    bytes.len()
                ),
            });
        }
        let samples = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate_hz: side.sample_rate_hz,
            annotations: side.annotations,
        })
    }
}
