//! Shared signal-processing primitives.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Root-raised-cosine taps, `2·span·sps + 1` long, normalized to unit energy.
pub fn rrc_taps(samples_per_symbol: usize, rolloff: f64, span: usize) -> Vec<f64> {
    let len = 2 * span * samples_per_symbol + 1;
    let center = (len - 1) as f64 / 2.0;
    let a = rolloff;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as f64 - center) / samples_per_symbol as f64;
            if t.abs() < 1e-12 {
                1.0 + a * (4.0 / PI - 1.0)
            } else if a > 0.0 && (t.abs() - 1.0 / (4.0 * a)).abs() < 1e-12 {
                a / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * a)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * a)).cos())
            } else {
                let num = (PI * t * (1.0 - a)).sin() + 4.0 * a * t * (PI * t * (1.0 + a)).cos();
                let den = PI * t * (1.0 - (4.0 * a * t).powi(2));
                num / den
            }
        })
        .collect();
    let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|h| *h /= norm);
    taps
}

pub fn fft_forward(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

/// Inverse FFT including the `1/n` normalization.
pub fn fft_inverse(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    let n = buf.len() as f64;
    FftPlanner::new()
        .plan_fft_inverse(buf.len())
        .process(&mut buf);
    buf.iter_mut().for_each(|v| *v /= n);
    buf
}

/// Smallest `2^a 3^b 5^c` that is at least `n`.
pub fn fast_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut cand = p35;
            while cand < n {
                cand *= 2;
            }
            best = best.min(cand);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Linear convolution with an odd-length real filter, returned with the same
/// length as `x` and aligned on the filter center. Computed with one FFT pair.
pub fn convolve_same(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    if x.is_empty() || taps.is_empty() {
        return x.to_vec();
    }
    let delay = (taps.len() - 1) / 2;
    let full = x.len() + taps.len() - 1;
    let n = fast_len(full);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    a[..x.len()].copy_from_slice(x);
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for (slot, &t) in h.iter_mut().zip(taps) {
        *slot = Complex64::new(t, 0.0);
    }
    fwd.process(&mut a);
    fwd.process(&mut h);
    for (va, vh) in a.iter_mut().zip(&h) {
        *va *= vh;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[delay..delay + x.len()]
        .iter()
        .map(|v| v * scale)
        .collect()
}

/// Multiply by `exp(j 2π f n / fs)` starting at sample index 0.
pub fn frequency_shift(x: &mut [Complex64], freq_hz: f64, sample_rate_hz: f64) {
    let step = freq_hz / sample_rate_hz;
    for (n, v) in x.iter_mut().enumerate() {
        // reduce the cycle count before scaling to keep phase accurate on long records
        let cycles = (n as f64 * step).fract();
        *v *= Complex64::from_polar(1.0, 2.0 * PI * cycles);
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Signed frequency of FFT bin `k` for an `n`-point transform.
pub fn bin_frequency(k: f64, n: usize, sample_rate_hz: f64) -> f64 {
    let nf = n as f64;
    let k = if k >= nf / 2.0 { k - nf } else { k };
    k * sample_rate_hz / nf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rrc_unit_energy_and_symmetry() {
        let h = rrc_taps(8, 0.3, 10);
        assert_eq!(h.len(), 161);
        assert!((h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..h.len() / 2 {
            assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-14);
        }
        let c = h.len() / 2;
        assert!(h.iter().all(|&v| v <= h[c]));
    }

    #[test]
    fn rrc_singular_point_is_continuous() {
        // rolloff 0.25 puts t = ±1 exactly on a tap at 4 samples per symbol
        let h = rrc_taps(4, 0.25, 4);
        let c = h.len() / 2;
        let at = h[c + 4];
        let near = (h[c + 3] + h[c + 5]) / 2.0;
        assert!((at - near).abs() < 0.1 * h[c]);
    }

    #[test]
    fn convolve_matches_direct() {
        let x: Vec<Complex64> = (0..37)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let taps = [0.2, -0.5, 1.0, 0.4, 0.1];
        let y = convolve_same(&x, &taps);
        for n in 0..x.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &t) in taps.iter().enumerate() {
                let idx = n as isize + 2 - k as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += x[idx as usize] * t;
                }
            }
            assert!((acc - y[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn fast_len_is_smooth() {
        for n in [1usize, 7, 100, 1001, 123_457] {
            let m = fast_len(n);
            assert!(m >= n);
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            assert_eq!(r, 1);
        }
    }

    #[test]
    fn fft_roundtrip() {
        let x: Vec<Complex64> = (0..30)
            .map(|i| Complex64::new(i as f64, -(i as f64)))
            .collect();
        let y = fft_inverse(&fft_forward(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
