//! Transmitter frame generation and the channel/detection model.
//!
//! Alice's quantum symbols and the interleaved QPSK training pilots share one
//! RRC-shaped baseband stream centered at 0 Hz. A strong unmodulated
//! reference tone sits `pilot_shift_hz` above it. The channel rotates the
//! whole waveform to the receiver's intermediate frequency, adds laser phase
//! noise, and adds shot, electronic and excess noise.
//!
//! Units: TX symbols are in SNU of the prepare-and-measure scheme (quadrature
//! variance `v_mod`). After the channel, one SNU equals the configured
//! shot-noise variance per quadrature at the matched-filter output.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};
use crate::security::UserChannelParams;
use crate::waveform::{ComplexWaveform, FrameMark, Interval};

/// Seed of the fixed pseudo-random QPSK training pattern.
pub const PILOT_PATTERN_SEED: u64 = 0x0051_4B44_5049_4C54;
pub const DEFAULT_PATTERN_PERIOD: usize = 64;
/// Two AOMs at 50 dB extinction each.
pub const GATE_ATTENUATION_DB: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformConfig {
    pub symbol_rate: f64,
    pub oversampling: usize,
    pub rrc_rolloff: f64,
    /// RRC half-length in symbols; the filter has `2·span·oversampling + 1` taps.
    pub rrc_span: usize,
    /// Reference tone frequency relative to the quantum band center.
    pub pilot_shift_hz: f64,
    /// Transmitter/receiver laser offset; where the tone lands after detection
    /// is `if_offset_hz + pilot_shift_hz`.
    pub if_offset_hz: f64,
    /// Combined Lorentzian linewidth of both lasers.
    pub laser_linewidth_hz: f64,
    /// Reference tone power per sample, in TX symbol units.
    pub pilot_tone_power: f64,
    /// IQ-modulator quadrature skew in degrees.
    pub iq_skew_deg: f64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl WaveformConfig {
    /// Laptop-scale rates: 10 MBd at 8 samples per symbol.
    pub fn desk() -> Self {
        Self {
            symbol_rate: 10e6,
            oversampling: 8,
            rrc_rolloff: 0.3,
            rrc_span: 10,
            pilot_shift_hz: 20e6,
            if_offset_hz: 8e6,
            laser_linewidth_hz: 2.0,
            pilot_tone_power: 1e4,
            iq_skew_deg: 0.0,
        }
    }

    /// Rates of the 1 GBd experiment: 750 MHz tone shift, ~1.55 GHz IF.
    pub fn full_rate() -> Self {
        Self {
            symbol_rate: 1e9,
            oversampling: 8,
            rrc_rolloff: 0.3,
            rrc_span: 10,
            pilot_shift_hz: 750e6,
            if_offset_hz: 1.55e9,
            laser_linewidth_hz: 200.0,
            pilot_tone_power: 1e4,
            iq_skew_deg: 0.0,
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.oversampling as f64
    }

    pub fn rrc_taps(&self) -> Vec<f64> {
        dsp::rrc_taps(self.oversampling, self.rrc_rolloff, self.rrc_span)
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversampling < 2 {
            return Err(Error::Config("oversampling must be >= 2".into()));
        }
        if !(self.symbol_rate > 0.0) {
            return Err(Error::Config("symbol_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rrc_rolloff) {
            return Err(Error::Config("rrc_rolloff must lie in [0, 1]".into()));
        }
        let half_band = (1.0 + self.rrc_rolloff) * self.symbol_rate / 2.0;
        let nyquist = self.sample_rate() / 2.0;
        let extent = half_band + self.pilot_shift_hz.abs() + self.if_offset_hz.abs();
        if extent >= nyquist {
            return Err(Error::Config(format!(
                "Nyquist violated: occupied extent {extent:.4e} Hz >= fs/2 = {nyquist:.4e} Hz"
            )));
        }
        if self.pilot_shift_hz.abs() <= half_band {
            return Err(Error::Config(
                "reference tone falls inside the quantum band".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub n_quantum: usize,
    pub pilot_ratio: f64,
    pub pattern_period: usize,
}

impl FrameLayout {
    pub fn new(n_quantum: usize, pilot_ratio: f64) -> Self {
        Self {
            n_quantum,
            pilot_ratio,
            pattern_period: DEFAULT_PATTERN_PERIOD,
        }
    }

    /// Pilot count; the ratio must divide the frame exactly.
    pub fn n_pilots(&self) -> Result<usize> {
        if !(0.0..1.0).contains(&self.pilot_ratio) {
            return Err(Error::InvalidParameter(format!(
                "pilot ratio {} outside [0, 1)",
                self.pilot_ratio
            )));
        }
        if self.pattern_period == 0 {
            return Err(Error::InvalidParameter(
                "pattern period must be >= 1".into(),
            ));
        }
        let exact = self.n_quantum as f64 * self.pilot_ratio / (1.0 - self.pilot_ratio);
        let n = exact.round();
        if (exact - n).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "pilot ratio {} does not divide {} quantum symbols into a whole pilot count",
                self.pilot_ratio, self.n_quantum
            )));
        }
        Ok(n as usize)
    }

    pub fn total(&self) -> Result<usize> {
        Ok(self.n_quantum + self.n_pilots()?)
    }
}

/// A contiguous run of pilots in the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotBlock {
    /// Frame index of the first pilot.
    pub start: usize,
    pub len: usize,
}

/// Frame symbols plus the demultiplexing map.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub symbols: Vec<Complex64>,
    pub quantum_positions: Vec<usize>,
    pub pilot_positions: Vec<usize>,
    pub pilot_blocks: Vec<PilotBlock>,
    /// Training pattern at the transmitted pilot amplitude.
    pub pattern: Vec<Complex64>,
    pub layout: FrameLayout,
}

impl Frame {
    pub fn quantum(&self) -> Vec<Complex64> {
        self.quantum_positions
            .iter()
            .map(|&i| self.symbols[i])
            .collect()
    }

    pub fn pilots(&self) -> Vec<Complex64> {
        self.pilot_positions
            .iter()
            .map(|&i| self.symbols[i])
            .collect()
    }

    /// Pilot blocks that carry the whole pattern.
    pub fn full_blocks(&self) -> impl Iterator<Item = &PilotBlock> {
        let p = self.layout.pattern_period;
        self.pilot_blocks.iter().filter(move |b| b.len == p)
    }
}

/// One uniform on (0, 1) from a 16-bit draw, bin-centered so `ln` stays finite.
fn uniform16(rng: &mut SimRng) -> f64 {
    (f64::from(rng.random::<u16>()) + 0.5) / 65536.0
}

/// Standard-normal pairs by Box-Muller on 16-bit uniforms, rejecting pairs
/// with either quadrature beyond 3σ.
pub fn truncated_box_muller(n: usize, rng: &mut SimRng) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1 = uniform16(rng);
        let u2 = uniform16(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        let (x, p) = (r * c, r * s);
        if x.abs() <= 3.0 && p.abs() <= 3.0 {
            out.push((x, p));
        }
    }
    out
}

/// Gaussian-modulated symbols, each quadrature rescaled after truncation so
/// its second moment equals `v_mod` exactly.
pub fn generate_gaussian_symbols(n: usize, v_mod: f64, seed: u64) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one symbol".into()));
    }
    if !(v_mod > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "v_mod must be > 0, got {v_mod}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let raw = truncated_box_muller(n, &mut rng);
    let m2x = raw.iter().map(|(x, _)| x * x).sum::<f64>() / n as f64;
    let m2p = raw.iter().map(|(_, p)| p * p).sum::<f64>() / n as f64;
    let (sx, sp) = ((v_mod / m2x).sqrt(), (v_mod / m2p).sqrt());
    Ok(raw
        .into_iter()
        .map(|(x, p)| Complex64::new(x * sx, p * sp))
        .collect())
}

/// Unit-amplitude QPSK training pattern `(±1 ± j)/√2`.
pub fn pilot_pattern(period: usize) -> Vec<Complex64> {
    let mut rng = rng_from_seed(PILOT_PATTERN_SEED);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    (0..period)
        .map(|_| {
            let bits: u8 = rng.random();
            let re = if bits & 1 == 0 { a } else { -a };
            let im = if bits & 2 == 0 { a } else { -a };
            Complex64::new(re, im)
        })
        .collect()
}

/// Interleaves pilots in blocks of `pattern_period`, each followed by its
/// share of quantum symbols. Pilots have the quantum symbols' RMS amplitude.
pub fn build_frame(symbols: &[Complex64], layout: &FrameLayout) -> Result<Frame> {
    if symbols.len() != layout.n_quantum {
        return Err(Error::InvalidParameter(format!(
            "{} symbols for a layout of {} quantum symbols",
            symbols.len(),
            layout.n_quantum
        )));
    }
    let n_p = layout.n_pilots()?;
    let n_q = layout.n_quantum;
    let period = layout.pattern_period;
    let rms = (symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / n_q.max(1) as f64).sqrt();
    let pattern: Vec<Complex64> = pilot_pattern(period).into_iter().map(|p| p * rms).collect();

    let total = n_q + n_p;
    let mut out = Vec::with_capacity(total);
    let mut quantum_positions = Vec::with_capacity(n_q);
    let mut pilot_positions = Vec::with_capacity(n_p);
    let mut pilot_blocks = Vec::new();
    if n_p == 0 {
        out.extend_from_slice(symbols);
        quantum_positions.extend(0..n_q);
    } else {
        let mut pilots_done = 0usize;
        let mut quantum_done = 0usize;
        while pilots_done < n_p {
            let block = period.min(n_p - pilots_done);
            pilot_blocks.push(PilotBlock {
                start: out.len(),
                len: block,
            });
            for j in 0..block {
                pilot_positions.push(out.len());
                out.push(pattern[(pilots_done + j) % period]);
            }
            pilots_done += block;
            let q_target = (pilots_done as u128 * n_q as u128 / n_p as u128) as usize;
            let q_target = if pilots_done == n_p { n_q } else { q_target };
            for s in &symbols[quantum_done..q_target] {
                quantum_positions.push(out.len());
                out.push(*s);
            }
            quantum_done = q_target;
        }
    }
    Ok(Frame {
        symbols: out,
        quantum_positions,
        pilot_positions,
        pilot_blocks,
        pattern,
        layout: layout.clone(),
    })
}

/// Result of pulse shaping, with the per-band powers.
#[derive(Debug, Clone)]
pub struct ShapedWaveform {
    pub waveform: ComplexWaveform,
    pub quantum_power: f64,
    pub tone_power: f64,
}

/// Upsamples, RRC-filters, applies the modulator skew, and adds the
/// reference tone at `pilot_shift_hz`. Symbol `k` peaks at sample `k·os`.
pub fn rrc_shape_and_shift(symbols: &[Complex64], cfg: &WaveformConfig) -> Result<ShapedWaveform> {
    cfg.validate()?;
    let os = cfg.oversampling;
    let mut up = vec![Complex64::new(0.0, 0.0); symbols.len() * os];
    for (k, s) in symbols.iter().enumerate() {
        up[k * os] = *s;
    }
    let mut shaped = dsp::convolve_same(&up, &cfg.rrc_taps());
    if cfg.iq_skew_deg != 0.0 {
        let (s, c) = cfg.iq_skew_deg.to_radians().sin_cos();
        for v in shaped.iter_mut() {
            *v = Complex64::new(v.re, v.im * c + v.re * s);
        }
    }
    let quantum_power = dsp::mean_power(&shaped);
    let amp = cfg.pilot_tone_power.sqrt();
    let mut tone = vec![Complex64::new(amp, 0.0); shaped.len()];
    dsp::frequency_shift(&mut tone, cfg.pilot_shift_hz, cfg.sample_rate());
    for (v, t) in shaped.iter_mut().zip(&tone) {
        *v += t;
    }
    let mut waveform = ComplexWaveform::new(shaped, cfg.sample_rate());
    waveform.annotations.frames.push(FrameMark {
        frame_id: 0,
        start: 0,
        len: waveform.len(),
    });
    Ok(ShapedWaveform {
        waveform,
        quantum_power,
        tone_power: if amp > 0.0 { cfg.pilot_tone_power } else { 0.0 },
    })
}

/// Controlled impairments for receiver tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Impairments {
    /// Symbol-spaced channel taps, centered on the middle tap.
    pub isi_taps: Vec<f64>,
    /// Integer delay in samples, applied circularly so a periodic record
    /// stays periodic.
    pub delay_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub user: UserChannelParams,
    /// Shot-noise variance per quadrature at the matched-filter output, in
    /// detector units.
    pub shot_noise_variance: f64,
    /// Includes the 50:50 split of a heterodyne receiver, so the recovered
    /// transmittance is `T·η_eff/2`.
    pub heterodyne: bool,
    /// Disable for noiseless reference runs.
    pub add_noise: bool,
    pub impairments: Impairments,
}

impl ChannelModel {
    pub fn heterodyne(user: UserChannelParams) -> Self {
        Self {
            user,
            shot_noise_variance: 1.0,
            heterodyne: true,
            add_noise: true,
            impairments: Impairments::default(),
        }
    }

    /// Transmittance seen in normalized receiver data.
    pub fn detected_tau(&self) -> f64 {
        let t = self.user.tau();
        if self.heterodyne {
            t / 2.0
        } else {
            t
        }
    }
}

fn gaussian(rng: &mut SimRng, sigma: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sigma, im * sigma)
}

/// Propagates the waveform through the fiber, splitter and detector.
///
/// Excess noise accompanies the signal and is skipped inside gated
/// segments; shot and electronic noise are present everywhere.
pub fn apply_channel(
    w: &ComplexWaveform,
    model: &ChannelModel,
    cfg: &WaveformConfig,
    seed: u64,
) -> Result<ComplexWaveform> {
    model.user.validate()?;
    if !(model.shot_noise_variance > 0.0) {
        return Err(Error::InvalidParameter(
            "shot noise variance must be > 0".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let fs = w.sample_rate_hz;
    let u = &model.user;
    let mut x = w.samples.clone();

    if model.add_noise && u.excess_noise > 0.0 {
        let sigma = u.excess_noise.sqrt();
        for (n, v) in x.iter_mut().enumerate() {
            if !w.annotations.is_gated(n) {
                *v += gaussian(&mut rng, sigma);
            }
        }
    } else if u.excess_noise < 0.0 {
        return Err(Error::InvalidParameter(
            "negative excess noise cannot be injected".into(),
        ));
    }

    let imp = &model.impairments;
    if !imp.isi_taps.is_empty() {
        let os = cfg.oversampling;
        let half = imp.isi_taps.len() / 2;
        let mut taps = vec![0.0; 2 * half * os + 1];
        for (k, &t) in imp.isi_taps.iter().enumerate() {
            taps[k * os] = t;
        }
        x = dsp::convolve_same(&x, &taps);
    }
    if imp.delay_samples > 0 && !x.is_empty() {
        let d = imp.delay_samples % x.len();
        x.rotate_right(d);
    }

    let mut amp2 = u.transmittance * u.eta * model.shot_noise_variance;
    if model.heterodyne {
        amp2 /= 2.0;
    }
    let amp = amp2.sqrt();
    let phase_step_sigma = (2.0 * PI * cfg.laser_linewidth_hz / fs).sqrt();
    let mut phase = 0.0f64;
    let carrier = cfg.if_offset_hz / fs;
    for (n, v) in x.iter_mut().enumerate() {
        if phase_step_sigma > 0.0 {
            let step: f64 = StandardNormal.sample(&mut rng);
            phase += phase_step_sigma * step;
        }
        let theta = 2.0 * PI * (n as f64 * carrier).fract() + phase;
        *v *= Complex64::from_polar(amp, theta);
    }

    if model.add_noise {
        let sigma = (model.shot_noise_variance * (1.0 + u.v_elec)).sqrt();
        for v in x.iter_mut() {
            *v += gaussian(&mut rng, sigma);
        }
    }
    Ok(ComplexWaveform {
        samples: x,
        sample_rate_hz: fs,
        annotations: w.annotations.clone(),
    })
}

/// Switches the optical signal off on each interval (AOM gating for shot
/// noise calibration).
pub fn gate_calibration_frames(
    w: &ComplexWaveform,
    schedule: &[Interval],
) -> Result<ComplexWaveform> {
    let mut sorted: Vec<Interval> = schedule.to_vec();
    sorted.sort_by_key(|i| i.start);
    for pair in sorted.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(Error::InvalidParameter(format!(
                "gate intervals overlap: {:?} and {:?}",
                pair[0], pair[1]
            )));
        }
    }
    for iv in &sorted {
        if iv.start > iv.end || iv.end > w.len() {
            return Err(Error::InvalidParameter(format!(
                "gate interval {iv:?} outside waveform of {} samples",
                w.len()
            )));
        }
    }
    let gain = 10f64.powf(-GATE_ATTENUATION_DB / 20.0);
    let mut out = w.clone();
    for iv in &sorted {
        out.samples[iv.start..iv.end]
            .iter_mut()
            .for_each(|v| *v *= gain);
    }
    out.annotations
        .gated
        .extend(sorted.iter().filter(|i| !i.is_empty()));
    out.annotations.gated.sort_by_key(|i| i.start);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_ratio_arithmetic() {
        let l = FrameLayout::new(800, 0.2);
        assert_eq!(l.n_pilots().unwrap(), 200);
        assert_eq!(l.total().unwrap(), 1000);
        let f = build_frame(&vec![Complex64::new(1.0, 0.0); 800], &l).unwrap();
        assert_eq!(f.pilot_positions.len(), 200);
        assert_eq!(f.quantum_positions.len(), 800);
        let lens: Vec<usize> = f.pilot_blocks.iter().map(|b| b.len).collect();
        assert_eq!(lens, vec![64, 64, 64, 8]);
        assert_eq!(f.full_blocks().count(), 3);
        assert!(FrameLayout::new(801, 0.2).n_pilots().is_err());
    }

    #[test]
    fn zero_ratio_is_passthrough() {
        let s: Vec<Complex64> = (0..10).map(|i| Complex64::new(i as f64, 0.5)).collect();
        let f = build_frame(&s, &FrameLayout::new(10, 0.0)).unwrap();
        assert_eq!(f.symbols, s);
        assert!(f.pilot_positions.is_empty());
    }

    #[test]
    fn demux_inverts_interleave() {
        let s = generate_gaussian_symbols(1200, 4.3, 9).unwrap();
        let f = build_frame(&s, &FrameLayout::new(1200, 0.2)).unwrap();
        assert_eq!(f.quantum(), s);
        let mut all: Vec<usize> = f
            .quantum_positions
            .iter()
            .chain(&f.pilot_positions)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..1500).collect::<Vec<_>>());
        // every full block carries the pattern
        for b in f.full_blocks() {
            assert_eq!(&f.symbols[b.start..b.start + b.len], &f.pattern[..]);
        }
    }

    #[test]
    fn pilot_rms_matches_quantum_rms() {
        let s = generate_gaussian_symbols(4000, 4.3, 1).unwrap();
        let f = build_frame(&s, &FrameLayout::new(4000, 0.2)).unwrap();
        let rms =
            |v: &[Complex64]| (v.iter().map(|x| x.norm_sqr()).sum::<f64>() / v.len() as f64).sqrt();
        assert!((rms(&f.pilots()) - rms(&s)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_symbols_hit_variance_and_are_deterministic() {
        let a = generate_gaussian_symbols(5000, 4.3, 42).unwrap();
        let b = generate_gaussian_symbols(5000, 4.3, 42).unwrap();
        assert_eq!(a, b);
        let vx = a.iter().map(|s| s.re * s.re).sum::<f64>() / 5000.0;
        assert!((vx - 4.3).abs() < 1e-12);
        assert!(generate_gaussian_symbols(0, 1.0, 0).is_err());
        assert!(generate_gaussian_symbols(5, 0.0, 0).is_err());
    }

    #[test]
    fn truncation_bound_holds() {
        let mut rng = rng_from_seed(5);
        let raw = truncated_box_muller(100_000, &mut rng);
        assert!(raw.iter().all(|(x, p)| x.abs() <= 3.0 && p.abs() <= 3.0));
    }

    #[test]
    fn impulse_reproduces_taps() {
        let cfg = WaveformConfig {
            pilot_tone_power: 0.0,
            ..WaveformConfig::desk()
        };
        let mut s = vec![Complex64::new(0.0, 0.0); 41];
        s[20] = Complex64::new(1.0, 0.0);
        let w = rrc_shape_and_shift(&s, &cfg).unwrap().waveform;
        let taps = cfg.rrc_taps();
        let half = taps.len() / 2;
        for (n, v) in w.samples.iter().enumerate() {
            let k = n as isize - 160 + half as isize;
            let want = if k >= 0 && (k as usize) < taps.len() {
                taps[k as usize]
            } else {
                0.0
            };
            assert!(
                (v.re - want).abs() < 1e-12 && v.im.abs() < 1e-12,
                "sample {n}"
            );
        }
    }

    #[test]
    fn nyquist_check() {
        let mut cfg = WaveformConfig::desk();
        cfg.if_offset_hz = 30e6;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(WaveformConfig::full_rate().validate().is_ok());
    }

    #[test]
    fn identity_channel() {
        let cfg = WaveformConfig {
            if_offset_hz: 0.0,
            laser_linewidth_hz: 0.0,
            ..WaveformConfig::desk()
        };
        let s = generate_gaussian_symbols(64, 4.3, 3).unwrap();
        let w = rrc_shape_and_shift(&s, &cfg).unwrap().waveform;
        let model = ChannelModel {
            user: UserChannelParams {
                transmittance: 1.0,
                excess_noise: 0.0,
                eta: 1.0,
                v_elec: 0.0,
            },
            shot_noise_variance: 1.0,
            heterodyne: false,
            add_noise: false,
            impairments: Impairments::default(),
        };
        let out = apply_channel(&w, &model, &cfg, 1).unwrap();
        for (a, b) in out.samples.iter().zip(&w.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gating_attenuates_and_annotates() {
        let w = ComplexWaveform::new(vec![Complex64::new(1.0, 1.0); 100], 1.0);
        assert_eq!(gate_calibration_frames(&w, &[]).unwrap(), w);
        let g = gate_calibration_frames(&w, &[Interval::new(10, 20)]).unwrap();
        let ratio = g.samples[15].norm_sqr() / w.samples[15].norm_sqr();
        assert!((10.0 * ratio.log10() + 100.0).abs() < 1e-9);
        assert_eq!(g.samples[25], w.samples[25]);
        assert_eq!(g.annotations.gated, vec![Interval::new(10, 20)]);
        assert!(
            gate_calibration_frames(&w, &[Interval::new(0, 10), Interval::new(5, 12)]).is_err()
        );
        assert!(gate_calibration_frames(&w, &[Interval::new(90, 120)]).is_err());
    }

    #[test]
    fn gated_segment_has_noise_floor_only() {
        let cfg = WaveformConfig::desk();
        let s = generate_gaussian_symbols(2000, 4.3, 3).unwrap();
        let w = rrc_shape_and_shift(&s, &cfg).unwrap().waveform;
        let w = gate_calibration_frames(&w, &[Interval::new(0, w.len())]).unwrap();
        let model = ChannelModel::heterodyne(UserChannelParams {
            transmittance: 0.5,
            excess_noise: 0.5,
            eta: 0.8,
            v_elec: 0.1,
        });
        let out = apply_channel(&w, &model, &cfg, 11).unwrap();
        let per_quadrature = dsp::mean_power(&out.samples) / 2.0;
        // 16000 complex samples: 3 sigma on the variance estimate is ~2.4 %
        assert!(
            (per_quadrature - 1.1).abs() < 0.03 * 1.1,
            "{per_quadrature}"
        );
    }
}
