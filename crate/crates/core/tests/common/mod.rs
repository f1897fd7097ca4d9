#![allow(dead_code)]

use cvqkd_pon::gaussian::{heterodyne_condition, CovarianceMatrix, SymplecticForm};
use cvqkd_pon::rx::{process_frame, superpose_pilots, DspConfig, FrameStructure, RecoveredSymbols};
use cvqkd_pon::security::UserChannelParams;
use cvqkd_pon::tx::{
    apply_channel, build_frame, gate_calibration_frames, generate_gaussian_symbols, pilot_pattern,
    rrc_shape_and_shift, ChannelModel, Frame, FrameLayout, WaveformConfig,
};
use cvqkd_pon::waveform::Interval;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `S·diag(ν)·Sᵀ` with `S = exp(ΩH)` for a random symmetric `H`, which is
/// symplectic. Returns the matrix and the symplectic spectrum used.
pub fn random_physical(modes: usize, rng: &mut ChaCha8Rng, scale: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = 2 * modes;
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let omega = SymplecticForm::new(modes).matrix();
    let s = (&omega * &h).exp();
    let nus: Vec<f64> = (0..modes)
        .map(|_| 1.0 + 3.0 * rng.random::<f64>())
        .collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        nus.iter().flat_map(|&v| [v, v]),
    ));
    let g = &s * d * s.transpose();
    ((&g + g.transpose()) * 0.5, nus)
}

pub fn physical(modes: usize, seed: u64) -> CovarianceMatrix {
    let (m, _) = random_physical(modes, &mut rng(seed), 0.3);
    CovarianceMatrix::new(m).unwrap()
}

pub struct Link {
    pub frame: Frame,
    pub rec: RecoveredSymbols,
}

/// One frame through shaping, optional gated tail, channel and receiver.
pub fn run_link(
    n_quantum: usize,
    tail: usize,
    seed: u64,
    wcfg: &WaveformConfig,
    dcfg: &DspConfig,
    model: &ChannelModel,
) -> Link {
    let sym = generate_gaussian_symbols(n_quantum, 4.3, seed).unwrap();
    let frame = build_frame(&sym, &FrameLayout::new(n_quantum, 0.2)).unwrap();
    let mut all = frame.symbols.clone();
    if tail > 0 {
        all.extend(generate_gaussian_symbols(tail, 4.3, seed ^ 0xA5A5).unwrap());
    }
    let shaped = rrc_shape_and_shift(&all, wcfg).unwrap().waveform;
    let start = frame.symbols.len() * wcfg.oversampling;
    let w = if tail > 0 {
        gate_calibration_frames(&shaped, &[Interval::new(start, shaped.len())]).unwrap()
    } else {
        shaped
    };
    let rx = apply_channel(&w, model, wcfg, seed.wrapping_mul(31).wrapping_add(7)).unwrap();
    let rec = process_frame(&rx, &FrameStructure::from(&frame), wcfg, dcfg).unwrap();
    Link { frame, rec }
}

pub fn user(transmittance: f64, excess_noise: f64) -> UserChannelParams {
    UserChannelParams {
        transmittance,
        excess_noise,
        eta: 1.0,
        v_elec: 0.0,
    }
}

pub fn noiseless(transmittance: f64) -> ChannelModel {
    let mut m = ChannelModel::heterodyne(user(transmittance, 0.0));
    m.add_noise = false;
    m
}

/// Least-squares gain `g` of `y ≈ g·x` and the residual-to-signal ratio in dB.
pub fn evm_db(x: &[Complex64], y: &[Complex64]) -> (Complex64, f64) {
    let num: Complex64 = x.iter().zip(y).map(|(a, b)| b * a.conj()).sum();
    let den: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    let g = num / den;
    let err: f64 = x.iter().zip(y).map(|(a, b)| (b - g * a).norm_sqr()).sum();
    (g, 10.0 * (err / (g.norm_sqr() * den)).log10())
}

/// Widely linear fit `y ≈ a·x + b·x*`; returns `|a|²/|b|²` in dB.
pub fn image_rejection_db(x: &[Complex64], y: &[Complex64]) -> f64 {
    let (mut s11, mut s12, mut s22) = (0.0, Complex64::new(0.0, 0.0), 0.0);
    let (mut r1, mut r2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (a, b) in x.iter().zip(y) {
        let c = a.conj();
        s11 += a.norm_sqr();
        s22 += a.norm_sqr();
        s12 += c * c;
        r1 += b * c;
        r2 += b * a;
    }
    // normal equations for [a, b] with regressors x and x*
    let det = s11 * s22 - s12.norm_sqr();
    let a = (r1 * s22 - r2 * s12) / det;
    let b = (r2 * s11 - r1 * s12.conj()) / det;
    10.0 * (a.norm_sqr() / b.norm_sqr()).log10()
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Symplectic spectrum from the moduli of the (complex) eigenvalues of `Ωγ`,
/// which come in pairs `±iν`. Descending.
pub fn oracle_spectrum(g: &DMatrix<f64>) -> Vec<f64> {
    let modes = g.nrows() / 2;
    let omega = SymplecticForm::new(modes).matrix();
    let mut mags: Vec<f64> = (omega * g)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Largest `|sample − closed form| / standard error` over the entries of
/// the heterodyne-conditioned covariance, where the sample version is the
/// classical regression residual of `n` Gaussian draws.
pub fn heterodyne_regression_z(
    gamma: &CovarianceMatrix,
    measured: usize,
    n: usize,
    seed: u64,
) -> f64 {
    let cond = heterodyne_condition(gamma, measured).unwrap();
    let g = gamma.matrix();
    // heterodyne outcomes carry one extra unit of vacuum noise per quadrature
    let mut joint = g.clone();
    for q in [2 * measured, 2 * measured + 1] {
        joint[(q, q)] += 1.0;
    }
    let d = joint.nrows();
    let l = joint.clone().cholesky().expect("positive definite").l();
    let mut r = rng(seed);
    let mut s = DMatrix::<f64>::zeros(d, d);
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
        let v = &l * z;
        s.syger(1.0, &v, &v, 1.0);
    }
    s.fill_upper_triangle_with_lower_triangle();
    s /= n as f64;

    let rest: Vec<usize> = (0..d).filter(|&i| i / 2 != measured).collect();
    let b = [2 * measured, 2 * measured + 1];
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| s[(rows[i], cols[j])])
    };
    let srb = pick(&rest, &b);
    let sample = pick(&rest, &rest) - &srb * pick(&b, &b).try_inverse().unwrap() * srb.transpose();
    let c = cond.matrix();
    let mut worst = 0.0f64;
    for i in 0..rest.len() {
        for j in 0..rest.len() {
            // standard error of a sample covariance entry
            let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / n as f64).sqrt();
            worst = worst.max((sample[(i, j)] - c[(i, j)]).abs() / se);
        }
    }
    worst
}

/// Superposition of M noisy copies of the pattern: SNR gain over a single
/// block, averaged over 100 seeds.
pub fn superposition_gain_db(m: usize) -> f64 {
    let pattern = pilot_pattern(64);
    let mut single = 0.0;
    let mut averaged = 0.0;
    for seed in 0..100 {
        let mut r = rng(1000 + seed);
        let blocks: Vec<Vec<Complex64>> = (0..m)
            .map(|_| {
                pattern
                    .iter()
                    .map(|p| {
                        p + Complex64::new(
                            r.sample::<f64, _>(StandardNormal),
                            r.sample::<f64, _>(StandardNormal),
                        ) * 0.5
                    })
                    .collect()
            })
            .collect();
        let sup = superpose_pilots(&blocks, m).unwrap();
        let noise = |b: &[Complex64]| -> f64 {
            b.iter()
                .zip(&pattern)
                .map(|(v, p)| (v - p).norm_sqr())
                .sum::<f64>()
                / b.len() as f64
        };
        single += noise(&blocks[0]);
        averaged += noise(&sup);
    }
    10.0 * (single / averaged).log10()
}
