//! Coherent averaging of the periodic training pattern and frame timing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Averages the first `m` equal-length pilot windows sample by sample.
pub fn superpose_pilots(blocks: &[Vec<Complex64>], m: usize) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "superposition count must be >= 1".into(),
        ));
    }
    if blocks.len() < m {
        return Err(Error::InvalidParameter(format!(
            "{m} repetitions requested, {} available",
            blocks.len()
        )));
    }
    let len = blocks[0].len();
    if blocks[..m].iter().any(|b| b.len() != len) {
        return Err(Error::Alignment("pilot windows differ in length".into()));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    for b in &blocks[..m] {
        for (a, v) in acc.iter_mut().zip(b) {
            *a += v;
        }
    }
    let inv = 1.0 / m as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    Ok(acc)
}

/// Normalized correlation of a symbol-grid slice against the pattern.
fn grid_correlation(
    x: &[Complex64],
    offset: isize,
    pattern: &[Complex64],
    sps: usize,
) -> Option<(Complex64, f64)> {
    let mut c = Complex64::new(0.0, 0.0);
    let mut ex = 0.0;
    for (k, p) in pattern.iter().enumerate() {
        let idx = offset + (k * sps) as isize;
        if idx < 0 || idx as usize >= x.len() {
            return None;
        }
        let v = x[idx as usize];
        c += v * p.conj();
        ex += v.norm_sqr();
    }
    let ep: f64 = pattern.iter().map(|p| p.norm_sqr()).sum();
    let den = (ex * ep).sqrt();
    Some((c, if den > 0.0 { c.norm() / den } else { 0.0 }))
}

/// Checks that the averaged window carries the pattern at the nominal
/// position `margin`. Returns the normalized correlation there.
pub fn verify_alignment(
    superposed: &[Complex64],
    pattern: &[Complex64],
    sps: usize,
    margin: usize,
) -> Result<f64> {
    let nominal = grid_correlation(superposed, margin as isize, pattern, sps)
        .map(|(_, r)| r)
        .ok_or_else(|| Error::Alignment("window shorter than the pattern".into()))?;
    let mut best = (0isize, nominal);
    for lag in -(margin as isize)..=(margin as isize) {
        if let Some((_, r)) = grid_correlation(superposed, margin as isize + lag, pattern, sps) {
            if r > best.1 {
                best = (lag, r);
            }
        }
    }
    // at quarter-symbol resolution the neighbors of the true peak are close
    // to it; only a clear displacement counts as misalignment
    if best.1 >= 0.5 && best.0.unsigned_abs() >= sps && best.1 > nominal * 1.05 {
        return Err(Error::Alignment(format!(
            "pattern peak at lag {} samples (rho {:.3}) instead of 0 (rho {:.3})",
            best.0, best.1, nominal
        )));
    }
    Ok(nominal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    /// Integer offset, in samples at the equalizer rate, of symbol 0.
    pub offset: isize,
    /// Normalized correlation of the superposed pattern at `offset`.
    pub correlation: f64,
    /// Parabolic refinement of the peak, in samples.
    pub fractional: f64,
}

/// Frame timing by correlating the superposed pilot grid against the
/// pattern for every candidate offset in `min_lag..=max_lag`.
///
/// `block_starts` are symbol indices of complete pilot blocks.
pub fn frame_sync(
    stream: &[Complex64],
    block_starts: &[usize],
    pattern: &[Complex64],
    sps: usize,
    min_lag: isize,
    max_lag: isize,
    threshold: f64,
) -> Result<SyncResult> {
    if block_starts.is_empty() {
        return Err(Error::FrameSync {
            corr: 0.0,
            threshold,
        });
    }
    let p = pattern.len();
    let ep: f64 = pattern.iter().map(|v| v.norm_sqr()).sum();
    let scores: Vec<(isize, f64, f64)> = (min_lag..=max_lag)
        .filter_map(|lag| {
            let mut grid = vec![Complex64::new(0.0, 0.0); p];
            for &b in block_starts {
                for (k, g) in grid.iter_mut().enumerate() {
                    let idx = ((b + k) * sps) as isize + lag;
                    if idx < 0 || idx as usize >= stream.len() {
                        return None;
                    }
                    *g += stream[idx as usize];
                }
            }
            let c: Complex64 = grid.iter().zip(pattern).map(|(g, q)| g * q.conj()).sum();
            let eg: f64 = grid.iter().map(|g| g.norm_sqr()).sum();
            let rho = if eg > 0.0 {
                c.norm() / (eg * ep).sqrt()
            } else {
                0.0
            };
            Some((lag, rho, c.norm()))
        })
        .collect();
    let Some(best_i) = (0..scores.len()).max_by(|&a, &b| scores[a].1.total_cmp(&scores[b].1))
    else {
        return Err(Error::FrameSync {
            corr: 0.0,
            threshold,
        });
    };
    let (offset, correlation, peak) = scores[best_i];
    if correlation < threshold {
        return Err(Error::FrameSync {
            corr: correlation,
            threshold,
        });
    }
    let fractional = if best_i > 0 && best_i + 1 < scores.len() {
        let (l, r) = (scores[best_i - 1].2, scores[best_i + 1].2);
        let den = l - 2.0 * peak + r;
        if den.abs() > 0.0 {
            (0.5 * (l - r) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(SyncResult {
        offset,
        correlation,
        fractional,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tx::pilot_pattern;

    #[test]
    fn single_block_is_identity() {
        let b = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)];
        assert_eq!(superpose_pilots(&[b.clone()], 1).unwrap(), b);
        assert!(superpose_pilots(&[b.clone()], 2).is_err());
        assert!(superpose_pilots(&[b.clone(), vec![b[0]]], 2).is_err());
    }

    fn upsampled(pattern: &[Complex64], sps: usize, margin: usize) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); pattern.len() * sps + 2 * margin];
        for (k, p) in pattern.iter().enumerate() {
            x[margin + k * sps] = *p;
        }
        x
    }

    #[test]
    fn alignment_check() {
        let pat = pilot_pattern(64);
        let x = upsampled(&pat, 4, 12);
        assert!((verify_alignment(&x, &pat, 4, 12).unwrap() - 1.0).abs() < 1e-12);
        let mut shifted = x.clone();
        shifted.rotate_right(8);
        assert!(matches!(
            verify_alignment(&shifted, &pat, 4, 12),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn sync_finds_offset() {
        let pat = pilot_pattern(64);
        let sps = 4;
        let mut frame = vec![Complex64::new(0.0, 0.0); 64 * 5 * sps + 64];
        for b in [0usize, 128, 256] {
            for (k, p) in pat.iter().enumerate() {
                frame[(b + k) * sps + 7] = *p;
            }
        }
        let s = frame_sync(&frame, &[0, 128, 256], &pat, sps, -4, 20, 0.5).unwrap();
        assert_eq!(s.offset, 7);
        assert!((s.correlation - 1.0).abs() < 1e-12);
        let zeros = vec![Complex64::new(0.0, 0.0); frame.len()];
        assert!(matches!(
            frame_sync(&zeros, &[0], &pat, sps, 0, 4, 0.5),
            Err(Error::FrameSync { .. })
        ));
    }
}
