use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::DspConfig;
use crate::dsp;
use crate::error::{Error, Result};
use crate::tx::WaveformConfig;
use crate::waveform::ComplexWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    /// Detected reference-tone frequency.
    pub tone_hz: f64,
    /// Fractional FFT bin of the peak.
    pub bin: f64,
    /// Peak power over the mean noise power per bin.
    pub peak_to_floor: f64,
    /// White-noise variance per complex sample, from the spectral floor.
    pub noise_variance: f64,
    pub fft_len: usize,
}

/// Locates the reference tone by FFT peak search with three-bin
/// interpolation (Jacobsen estimator with Candan's bias correction).
///
/// The noise floor is the median bin power divided by `ln 2`, which is the
/// mean of exponentially distributed noise bins and insensitive to the tone
/// and the quantum band.
pub fn estimate_frequency_offset(
    w: &ComplexWaveform,
    cfg: &DspConfig,
) -> Result<FrequencyEstimate> {
    let n = w.len().min(cfg.frequency_fft_len);
    if n < 8 {
        return Err(Error::NoSignal(format!(
            "{n} samples are too few for a spectral estimate"
        )));
    }
    let spectrum = dsp::fft_forward(&w.samples[..n]);
    let power: Vec<f64> = spectrum.iter().map(|v| v.norm_sqr()).collect();
    let (k, &peak) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let mut sorted = power.clone();
    let mid = n / 2;
    let (_, median, _) = sorted.select_nth_unstable_by(mid, f64::total_cmp);
    let floor = *median / LN_2;
    let ratio = if floor > 0.0 {
        peak / floor
    } else {
        f64::INFINITY
    };
    if !(ratio >= cfg.lock_threshold) {
        return Err(Error::LockFailure {
            ratio,
            threshold: cfg.lock_threshold,
        });
    }
    let prev = spectrum[(k + n - 1) % n];
    let next = spectrum[(k + 1) % n];
    let den = 2.0 * spectrum[k] - prev - next;
    let delta = if den.norm() > 0.0 {
        let raw = ((prev - next) / den).re;
        let c = (PI / n as f64).tan() / (PI / n as f64);
        (raw * c).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let bin = (k as f64 + delta).rem_euclid(n as f64);
    Ok(FrequencyEstimate {
        tone_hz: dsp::bin_frequency(bin, n, w.sample_rate_hz),
        bin,
        peak_to_floor: ratio,
        noise_variance: floor / n as f64,
        fft_len: n,
    })
}

/// Quantum and reference bands, each shifted to 0 Hz.
#[derive(Debug, Clone)]
pub struct BandSplit {
    pub quantum: Vec<Complex64>,
    pub pilot: Vec<Complex64>,
    pub quantum_center_hz: f64,
    pub pilot_center_hz: f64,
}

fn wrapped_distance(f: f64, center: f64, fs: f64) -> f64 {
    (f - center + fs / 2.0).rem_euclid(fs) - fs / 2.0
}

/// Brick-wall bandpass filters on the whole record, followed by the digital
/// shift of each band to baseband. Both shifts use the same tone estimate,
/// so any residual offset is common to the two outputs.
pub fn bandpass_and_split(
    w: &ComplexWaveform,
    tone_hz: f64,
    wcfg: &WaveformConfig,
    cfg: &DspConfig,
) -> Result<BandSplit> {
    let fs = w.sample_rate_hz;
    let q_center = tone_hz - wcfg.pilot_shift_hz;
    if wcfg.pilot_shift_hz.abs() < (cfg.quantum_bw_hz + cfg.pilot_bw_hz) / 2.0 {
        return Err(Error::Config(format!(
            "quantum ({:.4e} Hz) and pilot ({:.4e} Hz) bands overlap at a {:.4e} Hz shift",
            cfg.quantum_bw_hz, cfg.pilot_bw_hz, wcfg.pilot_shift_hz
        )));
    }
    if cfg.quantum_bw_hz >= fs || cfg.pilot_bw_hz >= fs {
        return Err(Error::Config(
            "filter bandwidth exceeds the sample rate".into(),
        ));
    }
    let n = w.len();
    let mut planner = FftPlanner::new();
    let mut spectrum = w.samples.clone();
    planner.plan_fft_forward(n).process(&mut spectrum);
    let zero = Complex64::new(0.0, 0.0);
    let mut q = vec![zero; n];
    let mut p = vec![zero; n];
    for (k, v) in spectrum.iter().enumerate() {
        let f = dsp::bin_frequency(k as f64, n, fs);
        if wrapped_distance(f, q_center, fs).abs() <= cfg.quantum_bw_hz / 2.0 {
            q[k] = *v;
        }
        if wrapped_distance(f, tone_hz, fs).abs() <= cfg.pilot_bw_hz / 2.0 {
            p[k] = *v;
        }
    }
    drop(spectrum);
    let inv = planner.plan_fft_inverse(n);
    let scale = 1.0 / n as f64;
    for buf in [&mut q, &mut p] {
        inv.process(buf);
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    dsp::frequency_shift(&mut q, -q_center, fs);
    dsp::frequency_shift(&mut p, -tone_hz, fs);
    Ok(BandSplit {
        quantum: q,
        pilot: p,
        quantum_center_hz: q_center,
        pilot_center_hz: tone_hz,
    })
}

/// RRC matched filter at the full rate, then decimation to
/// `eq_oversampling` samples per symbol.
pub fn matched_filter_downsample(
    stream: &[Complex64],
    wcfg: &WaveformConfig,
    eq_oversampling: usize,
) -> Result<Vec<Complex64>> {
    if eq_oversampling == 0 || wcfg.oversampling % eq_oversampling != 0 {
        return Err(Error::Config(format!(
            "equalizer oversampling {eq_oversampling} must divide the sample oversampling {}",
            wcfg.oversampling
        )));
    }
    let step = wcfg.oversampling / eq_oversampling;
    let filtered = dsp::convolve_same(stream, &wcfg.rrc_taps());
    Ok(filtered.into_iter().step_by(step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn tone(n: usize, f: f64, fs: f64, amp: f64) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(amp, 0.0); n];
        dsp::frequency_shift(&mut x, f, fs);
        x
    }

    #[test]
    fn pure_tone_is_located_to_a_tenth_of_a_bin() {
        let fs = 8e7;
        let n = 1 << 16;
        let cfg = DspConfig::desk();
        for f in [1.234_567e6, -7.77e6, 28.000_3e6] {
            let w = ComplexWaveform::new(tone(n, f, fs, 1.0), fs);
            let est = estimate_frequency_offset(&w, &cfg).unwrap();
            let bin_hz = fs / n as f64;
            assert!(
                (est.tone_hz - f).abs() < 0.1 * bin_hz,
                "{f}: {}",
                est.tone_hz
            );
        }
    }

    #[test]
    fn pure_noise_fails_to_lock() {
        let mut rng = rng_from_seed(4);
        let x: Vec<Complex64> = (0..1 << 16)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let w = ComplexWaveform::new(x, 1.0);
        assert!(matches!(
            estimate_frequency_offset(&w, &DspConfig::desk()),
            Err(Error::LockFailure { .. })
        ));
    }

    #[test]
    fn bands_are_isolated() {
        let wcfg = WaveformConfig::desk();
        let cfg = DspConfig::desk();
        let fs = wcfg.sample_rate();
        let n = 1 << 20;
        let f_tone = wcfg.if_offset_hz + wcfg.pilot_shift_hz + 17.3;
        let f_q = wcfg.if_offset_hz + 1.0e6 + 311.7;
        let reference = ComplexWaveform::new(tone(n, f_tone, fs, 1.0), fs);
        let quantum = ComplexWaveform::new(tone(n, f_q, fs, 1.0), fs);
        let db = |p: f64| 10.0 * p.max(1e-300).log10();

        let r = bandpass_and_split(&reference, f_tone, &wcfg, &cfg).unwrap();
        assert!(db(dsp::mean_power(&r.quantum)) <= -60.0);
        assert!(db(dsp::mean_power(&r.pilot)) > -0.1);
        let q = bandpass_and_split(&quantum, f_tone, &wcfg, &cfg).unwrap();
        assert!(db(dsp::mean_power(&q.pilot)) <= -60.0);
        assert!(db(dsp::mean_power(&q.quantum)) > -0.1);
    }

    #[test]
    fn overlapping_bands_are_rejected() {
        let wcfg = WaveformConfig::desk();
        let cfg = DspConfig {
            quantum_bw_hz: 45e6,
            ..DspConfig::desk()
        };
        let w = ComplexWaveform::new(vec![Complex64::new(1.0, 0.0); 64], wcfg.sample_rate());
        assert!(matches!(
            bandpass_and_split(&w, 0.0, &wcfg, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn matched_filter_preserves_white_noise_variance() {
        let wcfg = WaveformConfig::desk();
        let mut rng = rng_from_seed(8);
        let x: Vec<Complex64> = (0..200_000)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let y = matched_filter_downsample(&x, &wcfg, 4).unwrap();
        let var = dsp::mean_power(&y[100..y.len() - 100]) / 2.0;
        assert!((var - 1.0).abs() < 0.03, "{var}");
        assert!(matched_filter_downsample(&x, &wcfg, 3).is_err());
    }
}
