//! Receiver DSP: reference-tone frequency estimation, band separation,
//! carrier recovery, matched filtering, pilot superposition and
//! pilot-trained equalization.
//!
//! [`process_frame`] runs the whole chain on one detected frame and returns
//! the quantum-symbol quadratures together with the equalized samples from
//! the gated (signal-off) segments used for shot-noise calibration.

mod carrier;
mod equalizer;
mod filters;
mod superpose;

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use carrier::{carrier_recovery, phase_error_variance_model, pilot_snr_db, CarrierTrace};
pub use equalizer::Equalizer;
pub use filters::{
    bandpass_and_split, estimate_frequency_offset, matched_filter_downsample, BandSplit,
    FrequencyEstimate,
};
pub use superpose::{frame_sync, superpose_pilots, verify_alignment, SyncResult};

use crate::error::{Error, Result};
use crate::tx::{Frame, WaveformConfig};
use crate::waveform::{ComplexWaveform, FrameMark};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub quantum_bw_hz: f64,
    pub pilot_bw_hz: f64,
    /// Taps per branch of the 2×2 equalizer, at `eq_oversampling`.
    pub equalizer_taps: usize,
    pub lms_step_size: f64,
    pub lms_epochs: usize,
    pub eq_oversampling: usize,
    /// Pilot blocks averaged for training; `None` uses every full block.
    pub superposition: Option<usize>,
    pub frequency_fft_len: usize,
    /// Minimum spectral peak-to-floor power ratio for frequency lock.
    pub lock_threshold: f64,
    /// Minimum normalized pattern correlation for frame sync.
    pub sync_threshold: f64,
    pub max_sync_lag_symbols: usize,
    /// Below this reference SNR the lock is reported as degraded.
    pub min_pilot_snr_db: f64,
    pub trace_stride: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DspConfig {
    pub fn desk() -> Self {
        Self {
            quantum_bw_hz: 13e6,
            pilot_bw_hz: 20e3,
            equalizer_taps: 1,
            lms_step_size: 0.5,
            lms_epochs: 150,
            eq_oversampling: 4,
            superposition: None,
            frequency_fft_len: 1 << 20,
            lock_threshold: 50.0,
            sync_threshold: 0.5,
            max_sync_lag_symbols: 16,
            min_pilot_snr_db: 20.0,
            trace_stride: 4096,
        }
    }

    pub fn full_rate() -> Self {
        Self {
            quantum_bw_hz: 1.3e9,
            pilot_bw_hz: 200e3,
            ..Self::desk()
        }
    }

    pub fn validate(&self, wcfg: &WaveformConfig) -> Result<()> {
        let nyquist = wcfg.sample_rate() / 2.0;
        if !(self.quantum_bw_hz > 0.0 && self.quantum_bw_hz / 2.0 < nyquist) {
            return Err(Error::Config(format!(
                "quantum bandwidth {:.4e} Hz must be positive and below Nyquist",
                self.quantum_bw_hz
            )));
        }
        if !(self.pilot_bw_hz > 0.0 && self.pilot_bw_hz / 2.0 < nyquist) {
            return Err(Error::Config(format!(
                "pilot bandwidth {:.4e} Hz must be positive and below Nyquist",
                self.pilot_bw_hz
            )));
        }
        if self.equalizer_taps % 2 == 0 {
            return Err(Error::Config("equalizer taps must be odd".into()));
        }
        if !(self.lms_step_size > 0.0) {
            return Err(Error::Config("LMS step size must be > 0".into()));
        }
        if self.eq_oversampling == 0 || wcfg.oversampling % self.eq_oversampling != 0 {
            return Err(Error::Config(
                "equalizer oversampling must divide the waveform oversampling".into(),
            ));
        }
        if self.superposition == Some(0) {
            return Err(Error::Config("superposition count must be >= 1".into()));
        }
        Ok(())
    }
}

/// What the receiver knows about a frame: the layout and the training
/// pattern, not Alice's quantum data.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStructure {
    pub n_symbols: usize,
    pub quantum_positions: Vec<usize>,
    /// Symbol indices of pilot blocks that carry the full pattern.
    pub full_block_starts: Vec<usize>,
    pub pattern: Vec<Complex64>,
}

impl From<&Frame> for FrameStructure {
    fn from(f: &Frame) -> Self {
        Self {
            n_symbols: f.symbols.len(),
            quantum_positions: f.quantum_positions.clone(),
            full_block_starts: f.full_blocks().map(|b| b.start).collect(),
            pattern: f.pattern.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_id: u64,
    pub frequency: FrequencyEstimate,
    pub quantum_center_hz: f64,
    pub pilot_snr_db: f64,
    pub degraded_lock: bool,
    pub phase_error_bound_rad2: f64,
    pub carrier: CarrierTrace,
    pub sync: SyncResult,
    pub superposed_blocks: usize,
    pub alignment_correlation: f64,
    /// Complex pilot gain at the equalizer input.
    pub channel_gain: [f64; 2],
    /// Final training MSE per quadrature, on the superposed block.
    pub pilot_mse: f64,
    /// Expected noise-only MSE of the superposed block after equalization.
    pub pilot_noise_floor: Option<f64>,
    pub equalizer: Equalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSymbols {
    pub frame_id: u64,
    /// `(x, p)` of each quantum symbol in frame order, detector units.
    pub quantum: Vec<Complex64>,
    /// Equalized samples from the gated segments.
    pub calibration: Vec<Complex64>,
    pub metrics: FrameMetrics,
}

fn window(stream: &[Complex64], start: isize, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|i| {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < stream.len() {
                stream[idx as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Runs the full receiver chain on one frame.
pub fn process_frame(
    w: &ComplexWaveform,
    structure: &FrameStructure,
    wcfg: &WaveformConfig,
    cfg: &DspConfig,
) -> Result<RecoveredSymbols> {
    wcfg.validate()?;
    cfg.validate(wcfg)?;
    if structure.full_block_starts.is_empty() {
        return Err(Error::Config(
            "frame has no complete pilot block to train on".into(),
        ));
    }
    let fs = w.sample_rate_hz;
    let mark = w.annotations.frames.first().copied().unwrap_or(FrameMark {
        frame_id: 0,
        start: 0,
        len: w.len(),
    });

    let frequency = estimate_frequency_offset(w, cfg)?;
    let split = bandpass_and_split(w, frequency.tone_hz, wcfg, cfg)?;
    let (q, carrier) = carrier_recovery(&split.quantum, &split.pilot, cfg.trace_stride)?;
    let quantum_center_hz = split.quantum_center_hz;
    drop(split);
    let snr_db = pilot_snr_db(
        carrier.mean_pilot_power,
        frequency.noise_variance,
        cfg.pilot_bw_hz,
        fs,
    );
    let in_band = frequency.noise_variance * cfg.pilot_bw_hz / fs;
    let phase_bound = phase_error_variance_model(
        (carrier.mean_pilot_power - in_band).max(f64::MIN_POSITIVE),
        frequency.noise_variance,
        cfg.pilot_bw_hz,
        fs,
        wcfg.laser_linewidth_hz,
    );

    let sps = cfg.eq_oversampling;
    let s4 = matched_filter_downsample(&q, wcfg, sps)?;
    drop(q);
    let step = wcfg.oversampling / sps;
    let base = (mark.start / step) as isize;
    let pattern = &structure.pattern;
    let sync = frame_sync(
        &s4,
        &structure.full_block_starts,
        pattern,
        sps,
        base - 2 * sps as isize,
        base + (cfg.max_sync_lag_symbols * sps) as isize,
        cfg.sync_threshold,
    )?;
    let off = sync.offset;

    let taps = cfg.equalizer_taps;
    let margin = taps / 2 + sps;
    let p = pattern.len();
    let win_len = p * sps + 2 * margin;
    let n_full = structure.full_block_starts.len();
    let m = cfg.superposition.map_or(n_full, |m| m.min(n_full));
    let windows: Vec<Vec<Complex64>> = structure.full_block_starts[..m]
        .iter()
        .map(|&b| window(&s4, (b * sps) as isize + off - margin as isize, win_len))
        .collect();
    let sup = superpose_pilots(&windows, m)?;
    let alignment_correlation = verify_alignment(&sup, pattern, sps, margin)?;

    let centers: Vec<isize> = (0..p).map(|k| (margin + k * sps) as isize).collect();
    let ep: f64 = pattern.iter().map(|v| v.norm_sqr()).sum();
    let gain: Complex64 = centers
        .iter()
        .zip(pattern)
        .map(|(&c, v)| sup[c as usize] * v.conj())
        .sum::<Complex64>()
        / ep;
    if !(gain.norm() > 0.0) {
        return Err(Error::NoSignal(
            "zero pilot gain after superposition".into(),
        ));
    }
    let desired: Vec<Complex64> = pattern.iter().map(|v| v * gain.norm()).collect();
    let mut equalizer = Equalizer::centered(taps, gain)?;
    let history = equalizer.train(&sup, &centers, &desired, cfg.lms_step_size, cfg.lms_epochs)?;

    let pilot_noise_floor = if m > 1 {
        let mut acc = 0.0;
        for wdw in &windows {
            for &c in &centers {
                acc += (wdw[c as usize] - sup[c as usize]).norm_sqr();
            }
        }
        let per_sample = acc / (p * (m - 1)) as f64;
        let (gx, gp) = equalizer.noise_gain();
        Some(per_sample / 2.0 * (gx + gp) / 2.0 / m as f64)
    } else {
        None
    };
    drop(windows);

    let quantum_centers: Vec<isize> = structure
        .quantum_positions
        .iter()
        .map(|&k| (k * sps) as isize + off)
        .collect();
    let quantum = equalizer.apply_all(&s4, &quantum_centers);

    let guard = wcfg.rrc_span + taps / sps + 2;
    let os = wcfg.oversampling;
    let mut cal_centers = Vec::new();
    for g in &w.annotations.gated {
        if g.end <= mark.start {
            continue;
        }
        let first = (g.start.saturating_sub(mark.start)).div_ceil(os) + guard;
        let last = ((g.end - mark.start) / os).saturating_sub(guard);
        for k in first..last {
            let c = (k * sps) as isize + off;
            if c >= 0 && (c as usize) < s4.len() {
                cal_centers.push(c);
            }
        }
    }
    let calibration = equalizer.apply_all(&s4, &cal_centers);

    let degraded_lock = snr_db < cfg.min_pilot_snr_db;
    Ok(RecoveredSymbols {
        frame_id: mark.frame_id,
        quantum,
        calibration,
        metrics: FrameMetrics {
            frame_id: mark.frame_id,
            frequency,
            quantum_center_hz,
            pilot_snr_db: snr_db,
            degraded_lock,
            phase_error_bound_rad2: phase_bound,
            carrier,
            sync,
            superposed_blocks: m,
            alignment_correlation,
            channel_gain: [gain.re, gain.im],
            pilot_mse: history.last().copied().unwrap_or(f64::NAN),
            pilot_noise_floor,
            equalizer,
        },
    })
}

/// Writes `index,x,p` rows.
pub fn write_symbols_csv(path: &Path, symbols: &[Complex64]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    wtr.write_record(["index", "x", "p"])
        .map_err(|e| csv_error(path, e))?;
    for (i, s) in symbols.iter().enumerate() {
        wtr.write_record([i.to_string(), s.re.to_string(), s.im.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_symbols_csv(path: &Path) -> Result<Vec<Complex64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<(usize, f64, f64)>().enumerate() {
        let (i, x, p) = rec.map_err(|e| csv_error(path, e))?;
        if i != row {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("row {row} carries index {i}"),
            });
        }
        out.push(Complex64::new(x, p));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl RecoveredSymbols {
    fn paths(dir: &Path, stem: &str) -> [PathBuf; 3] {
        [
            dir.join(format!("{stem}.quantum.csv")),
            dir.join(format!("{stem}.calibration.csv")),
            dir.join(format!("{stem}.metrics.json")),
        ]
    }

    /// Writes `STEM.quantum.csv`, `STEM.calibration.csv` and
    /// `STEM.metrics.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let [q, c, m] = Self::paths(dir, stem);
        write_symbols_csv(&q, &self.quantum)?;
        write_symbols_csv(&c, &self.calibration)?;
        let json = serde_json::to_string_pretty(&self.metrics)
            .map_err(|e| Error::Numerical(format!("metrics serialization: {e}")))?;
        fs::write(&m, json).map_err(|e| Error::io(&m, e))
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let [q, c, m] = Self::paths(dir, stem);
        let text = fs::read_to_string(&m).map_err(|e| Error::io(&m, e))?;
        let metrics: FrameMetrics = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: m.clone(),
            message: e.to_string(),
        })?;
        Ok(Self {
            frame_id: metrics.frame_id,
            quantum: read_symbols_csv(&q)?,
            calibration: read_symbols_csv(&c)?,
            metrics,
        })
    }
}
