//! Gaussian-state linear algebra in shot-noise units.
//!
//! Quadratures are ordered `(x1, p1, x2, p2, ...)` and the vacuum has unit
//! variance. Every security quantity in the crate is evaluated on a
//! [`CovarianceMatrix`] through the functions here.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance used when checking `γ = γᵀ`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Symplectic eigenvalues down to `1 - PHYSICAL_TOL` are accepted and clamped to 1.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Two ν² values closer than this (relative) are treated as one degenerate pair.
pub const DEDUP_TOL: f64 = 1e-7;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Block-diagonal symplectic form Ω with 2×2 blocks `[[0, 1], [-1, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymplecticForm {
    modes: usize,
}

impl SymplecticForm {
    pub fn new(modes: usize) -> Self {
        Self { modes }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.modes;
        let mut omega = DMatrix::zeros(n, n);
        for m in 0..self.modes {
            omega[(2 * m, 2 * m + 1)] = 1.0;
            omega[(2 * m + 1, 2 * m)] = -1.0;
        }
        omega
    }
}

/// A validated `2M × 2M` covariance matrix of an `M`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    data: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Validates symmetry, positive definiteness and physicality
    /// (all symplectic eigenvalues ≥ 1 − 1e-9).
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let cm = Self::checked_shape(data)?;
        cm.symplectic_eigenvalues()?;
        Ok(cm)
    }

    /// Symmetrizes `data` as `(A + Aᵀ)/2` before validating it.
    pub fn from_symmetrized(data: DMatrix<f64>) -> Result<Self> {
        let sym = (&data + data.transpose()) * 0.5;
        Self::new(sym)
    }

    fn checked_shape(data: DMatrix<f64>) -> Result<Self> {
        let (r, c) = data.shape();
        if r != c || r == 0 || r % 2 != 0 {
            return Err(Error::InvalidMatrix(format!(
                "expected a non-empty 2M x 2M matrix, got {r} x {c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let scale = data.amax().max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in (i + 1)..r {
                if (data[(i, j)] - data[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidMatrix(format!(
                        "not symmetric at ({i}, {j}): {} vs {}",
                        data[(i, j)],
                        data[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    /// Vacuum state on `modes` modes.
    pub fn vacuum(modes: usize) -> Self {
        Self {
            data: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Single-mode thermal state with variance `nu` in both quadratures.
    pub fn thermal(nu: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(2, 2, nu))
    }

    /// Two-mode squeezed vacuum with quadrature variance `v`.
    pub fn tmsv(v: f64) -> Result<Self> {
        if v < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "TMSV variance {v} must be >= 1"
            )));
        }
        let c = (v * v - 1.0).sqrt();
        #[rustfmt::skip]
        let data = DMatrix::from_row_slice(4, 4, &[
            v,   0.0, c,   0.0,
            0.0, v,   0.0, -c,
            c,   0.0, v,   0.0,
            0.0, -c,  0.0, v,
        ]);
        Self::new(data)
    }

    pub fn modes(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Entry accessor in quadrature indices.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    /// Reduced state on the listed modes, in the given order.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        let m = self.modes();
        for &k in modes {
            if k >= m {
                return Err(Error::IndexOutOfRange { index: k, len: m });
            }
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
        let n = idx.len();
        let data = DMatrix::from_fn(n, n, |i, j| self.data[(idx[i], idx[j])]);
        Ok(Self { data })
    }

    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        symplectic_eigenvalues(self)
    }
}

/// Symplectic spectrum of `γ`, one value per mode, in descending order.
///
/// With `A = γ^½ Ω γ^½` (real antisymmetric, similar to `Ωγ`), the matrix
/// `AᵀA` is symmetric with eigenvalues `ν²`, each appearing twice. Only
/// symmetric eigensolvers are needed.
pub fn symplectic_eigenvalues(gamma: &CovarianceMatrix) -> Result<Vec<f64>> {
    let m = gamma.modes();
    let eig = gamma
        .data
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let lambda_min = eig.eigenvalues.min();
    if lambda_min <= 0.0 {
        return Err(Error::InvalidMatrix(format!(
            "not positive definite (smallest eigenvalue {lambda_min:e})"
        )));
    }
    let root_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let root = &eig.eigenvectors * root_diag * eig.eigenvectors.transpose();
    let a = &root * SymplecticForm::new(m).matrix() * &root;
    let ata = a.transpose() * &a;
    let ata = (&ata + ata.transpose()) * 0.5;
    let sq = ata
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symplectic eigensolver did not converge".into()))?
        .eigenvalues;
    let mut sq: Vec<f64> = sq.iter().copied().collect();
    sq.sort_by(|a, b| b.total_cmp(a));

    let mut nus = Vec::with_capacity(m);
    for pair in sq.chunks_exact(2) {
        let (hi, lo) = (pair[0], pair[1]);
        if (hi - lo).abs() > DEDUP_TOL * hi.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "symplectic pair not degenerate: {hi} vs {lo}"
            )));
        }
        let nu = (0.5 * (hi + lo)).max(0.0).sqrt();
        if nu < 1.0 - PHYSICAL_TOL {
            return Err(Error::UnphysicalEigenvalue(nu));
        }
        nus.push(nu.max(1.0));
    }
    Ok(nus)
}

/// Bosonic entropy `g(ν)` in bits.
pub fn entropy_g(nu: f64) -> Result<f64> {
    if !nu.is_finite() {
        return Err(Error::Numerical(format!("non-finite eigenvalue {nu}")));
    }
    if nu < 1.0 - PHYSICAL_TOL {
        return Err(Error::UnphysicalEigenvalue(nu));
    }
    if nu <= 1.0 {
        return Ok(0.0);
    }
    let plus = 0.5 * (nu + 1.0);
    let minus = 0.5 * (nu - 1.0);
    Ok(plus * plus.log2() - minus * minus.log2())
}

/// Von Neumann entropy in bits, `Σ g(ν_i)`.
pub fn von_neumann_entropy(gamma: &CovarianceMatrix) -> Result<f64> {
    symplectic_eigenvalues(gamma)?
        .into_iter()
        .map(entropy_g)
        .sum()
}

/// Conditional covariance of the remaining modes after ideal heterodyne
/// detection of `measured_mode`: `γ_R − σ (γ_B + I)⁻¹ σᵀ`.
pub fn heterodyne_condition(
    gamma: &CovarianceMatrix,
    measured_mode: usize,
) -> Result<CovarianceMatrix> {
    let m = gamma.modes();
    if m < 2 {
        return Err(Error::InvalidParameter(
            "heterodyne conditioning needs at least two modes".into(),
        ));
    }
    if measured_mode >= m {
        return Err(Error::IndexOutOfRange {
            index: measured_mode,
            len: m,
        });
    }
    let rest: Vec<usize> = (0..2 * m).filter(|&i| i / 2 != measured_mode).collect();
    let b = [2 * measured_mode, 2 * measured_mode + 1];
    let g = gamma.matrix();
    let n = rest.len();
    let gamma_r = DMatrix::from_fn(n, n, |i, j| g[(rest[i], rest[j])]);
    let sigma = DMatrix::from_fn(n, 2, |i, j| g[(rest[i], b[j])]);
    let gamma_b = DMatrix::from_fn(2, 2, |i, j| g[(b[i], b[j])]);
    let inv = (gamma_b + DMatrix::<f64>::identity(2, 2))
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular (γ_B + I)".into()))?;
    let cond = gamma_r - &sigma * inv * sigma.transpose();
    CovarianceMatrix::from_symmetrized(cond)
}

/// Per-quadrature Gaussian mutual information `½ log2(V / V_cond)` in bits.
pub fn scalar_gaussian_mutual_info(var_b: f64, var_b_given_a: f64) -> Result<f64> {
    if !(var_b > 0.0 && var_b_given_a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variances must be positive (got {var_b}, {var_b_given_a})"
        )));
    }
    Ok((0.5 * (var_b / var_b_given_a).log2()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn omega_squares_to_minus_identity() {
        let om = SymplecticForm::new(3).matrix();
        assert_eq!(&om * &om, -DMatrix::<f64>::identity(6, 6));
        assert_eq!(om.transpose(), -om);
    }

    #[test]
    fn vacuum_spectrum() {
        let nus = CovarianceMatrix::vacuum(1)
            .symplectic_eigenvalues()
            .unwrap();
        assert_eq!(nus.len(), 1);
        assert!(close(nus[0], 1.0, 1e-12));
    }

    #[test]
    fn thermal_spectrum() {
        let nus = CovarianceMatrix::thermal(3.0)
            .unwrap()
            .symplectic_eigenvalues()
            .unwrap();
        assert!(close(nus[0], 3.0, 1e-12));
    }

    #[test]
    fn tmsv_is_pure() {
        let g = CovarianceMatrix::tmsv(5.3).unwrap();
        let nus = g.symplectic_eigenvalues().unwrap();
        assert_eq!(nus.len(), 2);
        for nu in nus {
            assert!(close(nu, 1.0, 1e-9), "{nu}");
        }
        assert!(von_neumann_entropy(&g).unwrap().abs() < 1e-9);
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(entropy_g(1.0).unwrap(), 0.0);
        assert!(close(entropy_g(3.0).unwrap(), 2.0, 1e-12));
        let expected = 3.0 * 3f64.log2() - 2.0;
        assert!(close(entropy_g(5.0).unwrap(), expected, 1e-12));
        assert!(close(entropy_g(5.0).unwrap(), 2.754887502163468, 1e-12));
        // clamped just below one
        assert_eq!(entropy_g(1.0 - 1e-10).unwrap(), 0.0);
        assert!(matches!(
            entropy_g(0.99),
            Err(Error::UnphysicalEigenvalue(_))
        ));
    }

    #[test]
    fn entropy_is_monotone() {
        let mut prev = entropy_g(1.0).unwrap();
        for k in 1..200 {
            let g = entropy_g(1.0 + 0.05 * k as f64).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(
            von_neumann_entropy(&CovarianceMatrix::vacuum(2)).unwrap(),
            0.0
        );
        let t = CovarianceMatrix::thermal(3.0).unwrap();
        assert!(close(von_neumann_entropy(&t).unwrap(), 2.0, 1e-10));
    }

    #[test]
    fn heterodyne_on_tmsv_gives_coherent_state() {
        let g = CovarianceMatrix::tmsv(5.3).unwrap();
        let c = heterodyne_condition(&g, 1).unwrap();
        assert_eq!(c.modes(), 1);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(close(c.get(i, j), want, 1e-12));
            }
        }
    }

    #[test]
    fn heterodyne_on_product_state_keeps_other_block() {
        let mut m = DMatrix::<f64>::zeros(4, 4);
        m[(0, 0)] = 2.0;
        m[(1, 1)] = 3.0;
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        m[(2, 2)] = 4.0;
        m[(3, 3)] = 4.0;
        let g = CovarianceMatrix::new(m.clone()).unwrap();
        let c = heterodyne_condition(&g, 1).unwrap();
        assert_eq!(c.matrix(), &m.view((0, 0), (2, 2)).into_owned());
    }

    #[test]
    fn heterodyne_errors() {
        let g = CovarianceMatrix::tmsv(2.0).unwrap();
        assert!(matches!(
            heterodyne_condition(&g, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(heterodyne_condition(&CovarianceMatrix::vacuum(1), 0).is_err());
    }

    #[test]
    fn rejects_non_symmetric_and_indefinite() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = 0.1;
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(Error::InvalidMatrix(_))
        ));
        let m = DMatrix::from_diagonal_element(2, 2, -1.0);
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(Error::InvalidMatrix(_))
        ));
        // positive definite but violates the uncertainty principle
        let m = DMatrix::from_diagonal_element(2, 2, 0.5);
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(Error::UnphysicalEigenvalue(_))
        ));
    }

    #[test]
    fn scalar_mutual_info_examples() {
        assert_eq!(scalar_gaussian_mutual_info(2.0, 2.0).unwrap(), 0.0);
        assert!(close(
            scalar_gaussian_mutual_info(2.0, 1.0).unwrap(),
            0.5,
            1e-15
        ));
        let i = scalar_gaussian_mutual_info(1.0465, 1.0).unwrap();
        assert!(close(i, 0.5 * 1.0465f64.log2(), 1e-15));
        assert!(close(i, 0.03278, 1e-5));
        assert!(scalar_gaussian_mutual_info(0.0, 1.0).is_err());
        assert!(scalar_gaussian_mutual_info(1.0, -1.0).is_err());
    }

    #[test]
    fn reduced_picks_modes_in_order() {
        let g = CovarianceMatrix::tmsv(3.0).unwrap();
        let r = g.reduced(&[1, 0]).unwrap();
        assert_eq!(r.get(0, 0), 3.0);
        assert_eq!(r.get(1, 3), g.get(3, 1));
        assert!(g.reduced(&[2]).is_err());
    }
}
