use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decimated record of the reference phase and amplitude.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CarrierTrace {
    pub stride: usize,
    /// Unwrapped reference phase every `stride` samples.
    pub phase: Vec<f64>,
    pub mean_pilot_power: f64,
}

/// Removes the laser frequency offset and phase noise by multiplying the
/// quantum band with the unit-modulus conjugate of the reference band.
pub fn carrier_recovery(
    quantum: &[Complex64],
    pilot: &[Complex64],
    trace_stride: usize,
) -> Result<(Vec<Complex64>, CarrierTrace)> {
    if quantum.len() != pilot.len() {
        return Err(Error::InvalidParameter(format!(
            "quantum band has {} samples, pilot band {}",
            quantum.len(),
            pilot.len()
        )));
    }
    let stride = trace_stride.max(1);
    let mut phase = Vec::with_capacity(pilot.len() / stride + 1);
    let mut unwrapped = 0.0f64;
    let mut last = 0.0f64;
    let mut power = 0.0;
    let out = quantum
        .iter()
        .zip(pilot)
        .enumerate()
        .map(|(n, (q, p))| {
            let mag = p.norm();
            power += mag * mag;
            if n % stride == 0 {
                let a = p.arg();
                let mut d = a - last;
                d -= 2.0 * PI * (d / (2.0 * PI)).round();
                unwrapped += d;
                last = a;
                phase.push(unwrapped);
            }
            if mag > 0.0 {
                q * p.conj() / mag
            } else {
                *q
            }
        })
        .collect();
    let trace = CarrierTrace {
        stride,
        phase,
        mean_pilot_power: if pilot.is_empty() {
            0.0
        } else {
            power / pilot.len() as f64
        },
    };
    Ok((out, trace))
}

/// Residual phase-error variance (rad²) left by reference-tone tracking.
///
/// The first term is additive noise inside the reference filter; the second
/// is the part of a Lorentzian phase-noise spectrum of combined linewidth
/// `linewidth_hz` that falls outside the filter.
pub fn phase_error_variance_model(
    tone_power: f64,
    noise_variance: f64,
    pilot_bw_hz: f64,
    sample_rate_hz: f64,
    linewidth_hz: f64,
) -> f64 {
    let in_band_noise = noise_variance * pilot_bw_hz / sample_rate_hz;
    in_band_noise / (2.0 * tone_power) + 2.0 * linewidth_hz / (PI * pilot_bw_hz)
}

/// Reference SNR inside the pilot filter, in dB, capped at 300 dB.
pub fn pilot_snr_db(
    mean_pilot_power: f64,
    noise_variance: f64,
    pilot_bw_hz: f64,
    sample_rate_hz: f64,
) -> f64 {
    let in_band_noise = noise_variance * pilot_bw_hz / sample_rate_hz;
    let signal = (mean_pilot_power - in_band_noise).max(0.0);
    if in_band_noise <= 0.0 {
        return 300.0;
    }
    (10.0 * (signal / in_band_noise).max(1e-30).log10()).min(300.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_rotation_is_removed() {
        let rot = Complex64::from_polar(1.0, PI / 4.0);
        let q: Vec<Complex64> = (0..100)
            .map(|i| Complex64::new(i as f64 * 0.01, 1.0) * rot)
            .collect();
        let p = vec![rot * 3.0; 100];
        let (out, trace) = carrier_recovery(&q, &p, 10).unwrap();
        for (i, v) in out.iter().enumerate() {
            let want = Complex64::new(i as f64 * 0.01, 1.0);
            assert!((v - want).norm() < 1e-12);
        }
        assert!((trace.mean_pilot_power - 9.0).abs() < 1e-12);
        assert!(trace.phase.iter().all(|ph| (ph - PI / 4.0).abs() < 1e-12));
    }

    #[test]
    fn unit_reference_is_identity() {
        let q = vec![Complex64::new(0.3, -0.2); 16];
        let (out, _) = carrier_recovery(&q, &vec![Complex64::new(5.0, 0.0); 16], 4).unwrap();
        assert_eq!(out, q);
        assert!(carrier_recovery(&q, &q[..3], 1).is_err());
    }

    #[test]
    fn trace_unwraps_rotation() {
        let p: Vec<Complex64> = (0..1000)
            .map(|n| Complex64::from_polar(1.0, 0.01 * n as f64))
            .collect();
        let (_, trace) = carrier_recovery(&p, &p, 100).unwrap();
        let last = *trace.phase.last().unwrap();
        assert!((last - 9.0).abs() < 1e-9);
    }
}
