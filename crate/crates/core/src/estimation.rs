//! Shot-noise calibration, normalization and channel parameter estimation.
//!
//! Transmittance convention: `tau_hat` is referred to the heterodyne
//! output, `tau_hat = T·η_eff/2`, so that a normalized quadrature reads
//! `y = √tau_hat · x + z` with `Var(z) = 1 + tau_hat·ξ`. The security model's
//! `τ = T·η_eff` is therefore `2·tau_hat` (see [`ChannelEstimate::user_params`]).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::rx::RecoveredSymbols;
use crate::security::{ProtocolParams, UserChannelParams};

pub const SNR_MIN: f64 = 0.041;
pub const SNR_MAX: f64 = 0.048;
pub const SNR_BINS: usize = 12;
pub const DEFAULT_BETA: f64 = 0.92;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub min_samples: usize,
    /// Blocks used for the stationarity check.
    pub blocks: usize,
    /// z-score above which a block variance or the mean counts as signal.
    pub z_threshold: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            min_samples: 10_000,
            blocks: 10,
            z_threshold: 6.0,
        }
    }
}

/// Shot-noise unit measured on signal-off samples. Electronic noise is
/// included, so the SNU is the variance of shot plus electronic noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Mean of the two quadrature variances.
    pub snu_variance: f64,
    pub snu_x: f64,
    pub snu_p: f64,
    /// Standard error of `snu_variance`.
    pub std_error: f64,
    pub n_samples: usize,
    pub frame_id: u64,
}

/// Second moments per quadrature, about zero.
fn moments(v: &[Complex64]) -> (f64, f64) {
    let n = v.len() as f64;
    let (sx, sp) = v
        .iter()
        .fold((0.0, 0.0), |(a, b), c| (a + c.re * c.re, b + c.im * c.im));
    (sx / n, sp / n)
}

/// Measures the SNU and rejects calibration data that still carries
/// signal: a nonzero mean, or block-to-block variance changes larger than
/// sampling allows.
pub fn calibrate_snu(
    samples: &[Complex64],
    frame_id: u64,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let n = samples.len();
    if n < cfg.min_samples.max(2) {
        return Err(Error::InvalidParameter(format!(
            "{n} calibration samples, at least {} required",
            cfg.min_samples
        )));
    }
    let (vx, vp) = moments(samples);
    if !(vx > 0.0 && vp > 0.0) {
        return Err(Error::NoSignal(
            "calibration samples have zero variance".into(),
        ));
    }
    let mean: Complex64 = samples.iter().sum::<Complex64>() / n as f64;
    let zx = mean.re / (vx / n as f64).sqrt();
    let zp = mean.im / (vp / n as f64).sqrt();
    if zx.abs() > cfg.z_threshold || zp.abs() > cfg.z_threshold {
        return Err(Error::Contamination(format!(
            "calibration mean is {zx:.1}σ / {zp:.1}σ away from zero"
        )));
    }
    let blocks = cfg.blocks.clamp(1, n / 2);
    let len = n / blocks;
    let total = (vx + vp) / 2.0;
    for b in 0..blocks {
        let (bx, bp) = moments(&samples[b * len..(b + 1) * len]);
        let z = ((bx + bp) / 2.0 - total) / (total / (len as f64).sqrt());
        if z.abs() > cfg.z_threshold {
            return Err(Error::Contamination(format!(
                "block {b} variance deviates by {z:.1}σ from the frame average"
            )));
        }
    }
    Ok(CalibrationResult {
        snu_variance: total,
        snu_x: vx,
        snu_p: vp,
        std_error: total / (n as f64).sqrt(),
        n_samples: n,
        frame_id,
    })
}

/// Divides each quadrature by the square root of its calibrated variance.
///
/// Per-quadrature scaling matters because an adapted 2×2 equalizer does not
/// have exactly equal noise gains on x and p.
pub fn normalize(raw: &RecoveredSymbols, cal: &CalibrationResult) -> Result<Vec<Complex64>> {
    if raw.frame_id != cal.frame_id {
        return Err(Error::StaleCalibration {
            calibration: cal.frame_id,
            data: raw.frame_id,
        });
    }
    normalize_symbols(&raw.quantum, cal)
}

pub fn normalize_symbols(symbols: &[Complex64], cal: &CalibrationResult) -> Result<Vec<Complex64>> {
    if !(cal.snu_x > 0.0 && cal.snu_p > 0.0) {
        return Err(Error::InvalidParameter("SNU variance must be > 0".into()));
    }
    let (sx, sp) = (cal.snu_x.sqrt(), cal.snu_p.sqrt());
    Ok(symbols
        .iter()
        .map(|v| Complex64::new(v.re / sx, v.im / sp))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureEstimate {
    pub tau_hat: f64,
    pub xi_hat: f64,
    pub snr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    /// Heterodyne-referenced transmittance `T·η_eff/2`.
    pub tau_hat: f64,
    /// Input-referred excess noise, mean of x and p.
    pub xi_hat: f64,
    pub snr: f64,
    pub x: QuadratureEstimate,
    pub p: QuadratureEstimate,
    /// Sampling standard errors, excluding calibration uncertainty.
    pub tau_std: f64,
    pub xi_std: f64,
    pub n: usize,
}

impl ChannelEstimate {
    /// Channel parameters for the security model. Detector efficiency and
    /// electronic noise are folded into the transmittance.
    pub fn user_params(&self) -> UserChannelParams {
        UserChannelParams {
            transmittance: (2.0 * self.tau_hat).min(1.0),
            excess_noise: self.xi_hat,
            eta: 1.0,
            v_elec: 0.0,
        }
    }
}

/// Sufficient statistics for one Alice–Bob pair; merging moments from
/// several frames pools them into one estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelMoments {
    pub n: usize,
    /// `Σ x·y` per quadrature.
    pub xy: [f64; 2],
    /// `Σ y²` per quadrature.
    pub yy: [f64; 2],
}

impl ChannelMoments {
    pub fn from_pairs(x: &[Complex64], y: &[Complex64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidParameter(format!(
                "{} reference symbols for {} received",
                x.len(),
                y.len()
            )));
        }
        let mut m = Self {
            n: x.len(),
            ..Self::default()
        };
        for (a, b) in x.iter().zip(y) {
            m.xy[0] += a.re * b.re;
            m.xy[1] += a.im * b.im;
            m.yy[0] += b.re * b.re;
            m.yy[1] += b.im * b.im;
        }
        Ok(m)
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for q in 0..2 {
            self.xy[q] += other.xy[q];
            self.yy[q] += other.yy[q];
        }
    }

    /// `√τ̂ = ⟨x·y⟩ / V_A`, `ξ̂ = (Var(y) − τ̂·V_A − 1) / τ̂`, `SNR = τ̂·V_A`,
    /// per quadrature; the combined `τ̂` pools both quadratures.
    pub fn estimate(&self, v_mod: f64) -> Result<ChannelEstimate> {
        if self.n < 2 {
            return Err(Error::InvalidParameter("need at least two symbols".into()));
        }
        if !(v_mod > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "v_mod must be > 0, got {v_mod}"
            )));
        }
        let n = self.n as f64;
        let (cx, cp) = (self.xy[0] / n, self.xy[1] / n);
        let (yx, yp) = (self.yy[0] / n, self.yy[1] / n);
        let pooled_c = (cx + cp) / 2.0;
        let pooled_var = (yx + yp) / 2.0;
        let c_std = (v_mod * pooled_var / (2.0 * n)).sqrt();
        if pooled_c.abs() < 3.0 * c_std {
            return Err(Error::NoSignal(format!(
                "Alice-Bob correlation {pooled_c:.3e} is within 3σ ({c_std:.3e}) of zero"
            )));
        }
        let quad = |c: f64, vy: f64| {
            let tau = (c / v_mod).powi(2);
            QuadratureEstimate {
                tau_hat: tau,
                xi_hat: (vy - tau * v_mod - 1.0) / tau,
                snr: tau * v_mod,
            }
        };
        let qx = quad(cx, yx);
        let qp = quad(cp, yp);
        let tau_hat = (pooled_c / v_mod).powi(2);
        let tau_std = 2.0 * tau_hat.sqrt() * c_std / v_mod;
        // Var(y) sampling error over the 2n pooled quadrature samples
        let xi_std = pooled_var / n.sqrt() / tau_hat;
        Ok(ChannelEstimate {
            tau_hat,
            xi_hat: (qx.xi_hat + qp.xi_hat) / 2.0,
            snr: tau_hat * v_mod,
            x: qx,
            p: qp,
            tau_std,
            xi_std,
            n: self.n,
        })
    }
}

pub fn estimate_channel(x: &[Complex64], y: &[Complex64], v_mod: f64) -> Result<ChannelEstimate> {
    ChannelMoments::from_pairs(x, y)?.estimate(v_mod)
}

/// Raw second moments of `[x_A, p_A, x_B1, p_B1, …]` for joint covariance
/// estimation across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMoments {
    pub n: usize,
    pub users: usize,
    /// Row-major `d×d` sums with `d = 2·(users + 1)`.
    pub sums: Vec<f64>,
}

impl JointMoments {
    pub fn new(users: usize) -> Self {
        let d = 2 * (users + 1);
        Self {
            n: 0,
            users,
            sums: vec![0.0; d * d],
        }
    }

    pub fn add(&mut self, x_alice: &[Complex64], users: &[Vec<Complex64>]) -> Result<()> {
        if users.len() != self.users {
            return Err(Error::InvalidParameter(format!(
                "{} user sequences for {} users",
                users.len(),
                self.users
            )));
        }
        let n = x_alice.len();
        if users.iter().any(|u| u.len() != n) {
            return Err(Error::InvalidParameter(
                "user sequences must be aligned with Alice's".into(),
            ));
        }
        let d = 2 * (self.users + 1);
        let mut row = vec![0.0; d];
        for t in 0..n {
            row[0] = x_alice[t].re;
            row[1] = x_alice[t].im;
            for (i, u) in users.iter().enumerate() {
                row[2 * (i + 1)] = u[t].re;
                row[2 * (i + 1) + 1] = u[t].im;
            }
            for a in 0..d {
                let ra = row[a];
                let base = a * d;
                for b in a..d {
                    self.sums[base + b] += ra * row[b];
                }
            }
        }
        self.n += n;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.users != self.users {
            return Err(Error::InvalidParameter("user counts differ".into()));
        }
        self.n += other.n;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        Ok(())
    }

    fn mean(&self, a: usize, b: usize) -> f64 {
        let d = 2 * (self.users + 1);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.sums[a * d + b] / self.n as f64
    }

    pub fn channel(&self, user: usize) -> Result<ChannelMoments> {
        if user >= self.users {
            return Err(Error::IndexOutOfRange {
                index: user,
                len: self.users,
            });
        }
        let d = 2 * (self.users + 1);
        let b = 2 * (user + 1);
        let s = |i: usize, j: usize| self.sums[i.min(j) * d + i.max(j)];
        Ok(ChannelMoments {
            n: self.n,
            xy: [s(0, b), s(1, b + 1)],
            yy: [s(b, b), s(b + 1, b + 1)],
        })
    }

    /// Empirical `(N+1)`-mode covariance in entanglement-based coordinates.
    ///
    /// Alice's mode is `V·I` from her data; Bob blocks are mapped from
    /// heterodyne outputs as `γ_B = 2·Var(y) − 1`, `γ_AB = (2/k)·Cov(x, y)`
    /// with the p entry sign-flipped, and `γ_{BiBj} = 2·Cov(y_i, y_j)`.
    /// Cross-quadrature moments are dropped. Fails if the estimate is
    /// unphysical.
    pub fn covariance(&self, p: &ProtocolParams) -> Result<CovarianceMatrix> {
        p.validate()?;
        if self.n < 2 || self.users == 0 {
            return Err(Error::InvalidParameter(
                "need at least one user and two symbols".into(),
            ));
        }
        let modes = self.users + 1;
        let mut m = DMatrix::<f64>::zeros(2 * modes, 2 * modes);
        let k = p.k();
        for q in 0..2 {
            m[(q, q)] = self.mean(q, q) + 1.0;
            let z = if q == 0 { 1.0 } else { -1.0 };
            for i in 0..self.users {
                let r = 2 * (i + 1) + q;
                m[(r, r)] = 2.0 * self.mean(r, r) - 1.0;
                let ab = z * 2.0 / k * self.mean(q, r);
                m[(q, r)] = ab;
                m[(r, q)] = ab;
                for j in i + 1..self.users {
                    let s = 2 * (j + 1) + q;
                    let bb = 2.0 * self.mean(r, s);
                    m[(r, s)] = bb;
                    m[(s, r)] = bb;
                }
            }
        }
        CovarianceMatrix::from_symmetrized(m)
    }
}

pub fn estimate_joint_covariance(
    x_alice: &[Complex64],
    users: &[Vec<Complex64>],
    p: &ProtocolParams,
) -> Result<CovarianceMatrix> {
    if users.is_empty() {
        return Err(Error::InvalidParameter("no user data".into()));
    }
    let mut m = JointMoments::new(users.len());
    m.add(x_alice, users)?;
    m.covariance(p)
}

/// `η = 1240·R/λ` (R in A/W, λ in nm), then `η′ = η·α`.
pub fn detector_efficiency(
    responsivity: f64,
    wavelength_nm: f64,
    trusted_loss_alpha: f64,
) -> Result<f64> {
    if !(responsivity > 0.0 && wavelength_nm > 0.0 && trusted_loss_alpha > 0.0) {
        return Err(Error::InvalidParameter(
            "responsivity, wavelength and alpha must be > 0".into(),
        ));
    }
    let eta = 1240.0 * responsivity / wavelength_nm * trusted_loss_alpha;
    if eta > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "detector efficiency {eta:.4} exceeds 1"
        )));
    }
    Ok(eta)
}

/// Reconciliation efficiency per SNR bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTable {
    pub betas: Vec<f64>,
}

impl Default for BetaTable {
    fn default() -> Self {
        Self {
            betas: vec![DEFAULT_BETA; SNR_BINS],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationPlan {
    /// 1-based bin.
    pub bin_index: usize,
    pub beta_effective: f64,
    /// `(lower, upper]` SNR edges of the bin; bin 1 also includes its lower edge.
    pub snr_range: (f64, f64),
    /// The SNR lay above the table and was assigned to the top bin.
    pub clamped: bool,
}

pub fn bin_width() -> f64 {
    (SNR_MAX - SNR_MIN) / SNR_BINS as f64
}

/// Selects one of 12 uniform bins over `[0.041, 0.048]`. Bins are closed on
/// the right, so both interval ends map to the end bins.
pub fn snr_classify(snr: f64, table: &BetaTable) -> Result<ReconciliationPlan> {
    if table.betas.len() != SNR_BINS {
        return Err(Error::Config(format!(
            "beta table needs {SNR_BINS} entries, has {}",
            table.betas.len()
        )));
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SNR must be > 0, got {snr}"
        )));
    }
    let w = bin_width();
    let tol = 1e-9;
    if snr < SNR_MIN * (1.0 - tol) {
        return Err(Error::InsufficientRate { snr, min: SNR_MIN });
    }
    let clamped = snr > SNR_MAX * (1.0 + tol);
    let t = (snr - SNR_MIN) / w;
    let bin = if clamped {
        SNR_BINS
    } else {
        ((t - tol).ceil().max(1.0) as usize).min(SNR_BINS)
    };
    let lo = SNR_MIN + (bin - 1) as f64 * w;
    Ok(ReconciliationPlan {
        bin_index: bin,
        beta_effective: table.betas[bin - 1],
        snr_range: (lo, lo + w),
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessNoiseSummary {
    pub n_frames: usize,
    pub x: QuadratureSummary,
    pub p: QuadratureSummary,
    pub mean: f64,
}

fn summarize(v: &[f64]) -> QuadratureSummary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    QuadratureSummary {
        mean,
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std: var.sqrt(),
    }
}

/// Per-quadrature mean and spread of ξ̂ across frames.
pub fn excess_noise_statistics(frames: &[ChannelEstimate]) -> Result<ExcessNoiseSummary> {
    if frames.is_empty() {
        return Err(Error::InvalidParameter("no frames to summarize".into()));
    }
    let xs: Vec<f64> = frames.iter().map(|f| f.x.xi_hat).collect();
    let ps: Vec<f64> = frames.iter().map(|f| f.p.xi_hat).collect();
    let x = summarize(&xs);
    let p = summarize(&ps);
    Ok(ExcessNoiseSummary {
        n_frames: frames.len(),
        x,
        p,
        mean: (x.mean + p.mean) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, var: f64, seed: u64) -> Vec<Complex64> {
        let mut rng = rng_from_seed(seed);
        let s = var.sqrt();
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * s, b * s)
            })
            .collect()
    }

    #[test]
    fn snu_of_unit_and_electronic_noise() {
        let cfg = CalibrationConfig::default();
        for (var, seed) in [(1.0, 1), (1.1, 2)] {
            let n = 100_000;
            let cal = calibrate_snu(&noise(n, var, seed), 0, &cfg).unwrap();
            let sigma = var * (1.0 / n as f64).sqrt();
            assert!((cal.snu_variance - var).abs() < 3.0 * sigma);
        }
        assert!(calibrate_snu(&noise(100, 1.0, 3), 0, &cfg).is_err());
    }

    #[test]
    fn attenuated_residual_passes_strong_residual_fails() {
        let cfg = CalibrationConfig::default();
        let n = 100_000;
        let mut x = noise(n, 1.0, 4);
        let sig = noise(n / 2, 4.3 * 0.0108, 5);
        let gain = 1e-5;
        let mut weak = x.clone();
        for (v, s) in weak[n / 2..].iter_mut().zip(&sig) {
            *v += s * gain;
        }
        assert!(calibrate_snu(&weak, 0, &cfg).is_ok());
        // an ungated half raises the back half's variance by several percent
        for (v, s) in x[n / 2..].iter_mut().zip(&sig) {
            *v += s * 2.0;
        }
        assert!(matches!(
            calibrate_snu(&x, 0, &cfg),
            Err(Error::Contamination(_))
        ));
    }

    #[test]
    fn normalization() {
        let cal = CalibrationResult {
            snu_variance: 4.0,
            snu_x: 4.0,
            snu_p: 4.0,
            std_error: 0.0,
            n_samples: 1,
            frame_id: 7,
        };
        let y = normalize_symbols(&noise(50_000, 4.0, 6), &cal).unwrap();
        let (vx, vp) = moments(&y);
        assert!((vx - 1.0).abs() < 0.03 && (vp - 1.0).abs() < 0.03);
        let unit = CalibrationResult {
            snu_variance: 1.0,
            snu_x: 1.0,
            snu_p: 1.0,
            ..cal
        };
        let again = normalize_symbols(&y, &unit).unwrap();
        assert_eq!(again, y);
    }

    #[test]
    fn pure_shot_noise_channel() {
        let x = noise(200_000, 4.3, 7);
        let z = noise(200_000, 1.0, 8);
        let y: Vec<Complex64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let est = estimate_channel(&x, &y, 4.3).unwrap();
        assert!((est.tau_hat - 1.0).abs() < 3.0 * est.tau_std);
        assert!(est.xi_hat.abs() < 3.0 * est.xi_std);
        assert!(matches!(
            estimate_channel(&x, &z, 4.3),
            Err(Error::NoSignal(_))
        ));
    }

    #[test]
    fn efficiency_examples() {
        let eta = detector_efficiency(0.95, 1550.0, 1.0).unwrap();
        assert!((eta - 0.76).abs() < 1e-12);
        let eta1 = detector_efficiency(0.95, 1550.0, 0.934).unwrap();
        assert!((eta1 - 0.71).abs() < 1e-3);
        assert!(detector_efficiency(1.5, 1550.0, 1.0).is_err());
        assert!(detector_efficiency(0.0, 1550.0, 1.0).is_err());
    }

    #[test]
    fn snr_bins() {
        let t = BetaTable::default();
        assert_eq!(snr_classify(0.041, &t).unwrap().bin_index, 1);
        assert_eq!(snr_classify(0.048, &t).unwrap().bin_index, 12);
        assert_eq!(snr_classify(0.0445, &t).unwrap().bin_index, 6);
        let hi = snr_classify(0.06, &t).unwrap();
        assert!(hi.clamped && hi.bin_index == 12);
        assert!(matches!(
            snr_classify(0.03, &t),
            Err(Error::InsufficientRate { .. })
        ));
        assert!(snr_classify(0.0, &t).is_err());
    }

    #[test]
    fn constant_frames_have_zero_spread() {
        let q = QuadratureEstimate {
            tau_hat: 0.01,
            xi_hat: 0.03,
            snr: 0.043,
        };
        let f = ChannelEstimate {
            tau_hat: 0.01,
            xi_hat: 0.03,
            snr: 0.043,
            x: q,
            p: QuadratureEstimate { xi_hat: 0.02, ..q },
            tau_std: 0.0,
            xi_std: 0.0,
            n: 1,
        };
        let s = excess_noise_statistics(&[f; 5]).unwrap();
        assert!((s.x.mean - 0.03).abs() < 1e-15 && s.x.max == s.x.min && s.x.std == 0.0);
        assert!((s.p.mean - 0.02).abs() < 1e-15);
        assert!(excess_noise_statistics(&[]).is_err());
    }
}
