//! 2×2 real fractionally-spaced FIR equalizer.
//!
//! Each output quadrature is a real linear combination of the in-phase and
//! quadrature parts of `taps` consecutive input samples, which corrects IQ
//! imbalance, residual ISI and static phase together.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equalizer {
    pub taps: usize,
    /// `[re taps.., im taps..]` producing the x quadrature.
    pub wx: Vec<f64>,
    /// `[re taps.., im taps..]` producing the p quadrature.
    pub wp: Vec<f64>,
}

impl Equalizer {
    /// Center-tap filter that derotates by `rotation`'s phase.
    pub fn centered(taps: usize, rotation: Complex64) -> Result<Self> {
        if taps % 2 == 0 {
            return Err(Error::Config(format!(
                "equalizer taps must be odd, got {taps}"
            )));
        }
        let h = taps / 2;
        let (c, s) = if rotation.norm() > 0.0 {
            let u = rotation / rotation.norm();
            (u.re, u.im)
        } else {
            (1.0, 0.0)
        };
        let mut wx = vec![0.0; 2 * taps];
        let mut wp = vec![0.0; 2 * taps];
        wx[h] = c;
        wx[taps + h] = s;
        wp[h] = -s;
        wp[taps + h] = c;
        Ok(Self { taps, wx, wp })
    }

    fn regressor(&self, stream: &[Complex64], center: isize, u: &mut [f64]) {
        let h = (self.taps / 2) as isize;
        for j in 0..self.taps {
            let idx = center + j as isize - h;
            let v = if idx >= 0 && (idx as usize) < stream.len() {
                stream[idx as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
            u[j] = v.re;
            u[self.taps + j] = v.im;
        }
    }

    /// Output for the symbol whose matched-filter peak is at `center`.
    /// Samples outside the stream count as zero.
    pub fn apply(&self, stream: &[Complex64], center: isize) -> Complex64 {
        let mut u = vec![0.0; 2 * self.taps];
        self.regressor(stream, center, &mut u);
        Complex64::new(dot(&self.wx, &u), dot(&self.wp, &u))
    }

    pub fn apply_all(&self, stream: &[Complex64], centers: &[isize]) -> Vec<Complex64> {
        let mut u = vec![0.0; 2 * self.taps];
        centers
            .iter()
            .map(|&c| {
                self.regressor(stream, c, &mut u);
                Complex64::new(dot(&self.wx, &u), dot(&self.wp, &u))
            })
            .collect()
    }

    /// Sum of squared coefficients feeding each output quadrature.
    pub fn noise_gain(&self) -> (f64, f64) {
        (dot(&self.wx, &self.wx), dot(&self.wp, &self.wp))
    }

    /// Normalized LMS over `epochs` passes of the training set with a step
    /// that decays as `μ / (1 + epoch/25)`. Returns the per-epoch MSE
    /// (per quadrature).
    pub fn train(
        &mut self,
        input: &[Complex64],
        centers: &[isize],
        desired: &[Complex64],
        step_size: f64,
        epochs: usize,
    ) -> Result<Vec<f64>> {
        if centers.len() != desired.len() || centers.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} training positions for {} targets",
                centers.len(),
                desired.len()
            )));
        }
        if !(step_size > 0.0) {
            return Err(Error::Config(format!(
                "LMS step size must be > 0, got {step_size}"
            )));
        }
        let mut u = vec![0.0; 2 * self.taps];
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mu = step_size / (1.0 + epoch as f64 / 25.0);
            let mut sq = 0.0;
            for (&c, d) in centers.iter().zip(desired) {
                self.regressor(input, c, &mut u);
                let ex = d.re - dot(&self.wx, &u);
                let ep = d.im - dot(&self.wp, &u);
                sq += ex * ex + ep * ep;
                let g = mu / (REGULARIZATION + dot(&u, &u));
                for ((wx, wp), ui) in self.wx.iter_mut().zip(self.wp.iter_mut()).zip(&u) {
                    *wx += g * ex * ui;
                    *wp += g * ep * ui;
                }
            }
            let mse = sq / (2.0 * centers.len() as f64);
            if !mse.is_finite() {
                return Err(Error::StepSize(format!(
                    "training MSE became non-finite in epoch {epoch} (mu = {step_size})"
                )));
            }
            history.push(mse);
        }
        check_convergence(&history, step_size)?;
        Ok(history)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flags divergence when the final tenth of the epochs sits well above the
/// best epoch.
fn check_convergence(history: &[f64], step_size: f64) -> Result<()> {
    if history.len() < 2 {
        return Ok(());
    }
    let best = history.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = (history.len() / 10).max(1);
    let tail_mean = history[history.len() - tail..].iter().sum::<f64>() / tail as f64;
    if tail_mean > 10.0 * best.max(1e-300) && tail_mean > history[0] {
        return Err(Error::StepSize(format!(
            "training MSE grew from {:.3e} to {tail_mean:.3e} (mu = {step_size})",
            history[0]
        )));
    }
    Ok(())
}
