//! Small dense linear-algebra helpers used throughout the crate:
//! lower-triangle packing, symmetry/PSD checks, and a Cholesky
//! factorization with an eigendecomposition fallback for boundary
//! positive-semidefinite matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Length of the packed row-major lower triangle of a p x p matrix.
pub fn tri_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Dimension p such that `tri_len(p) == len`, if one exists.
pub fn tri_dim(len: usize) -> Option<usize> {
    let mut p = 0;
    while tri_len(p) < len {
        p += 1;
    }
    (tri_len(p) == len).then_some(p)
}

/// Pack the lower triangle of a symmetric matrix, row-major.
pub fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(tri_len(p));
    for i in 0..p {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Mirror a packed row-major lower triangle into a full symmetric matrix.
pub fn unpack_lower(tri: &[f64], p: usize) -> DMatrix<f64> {
    assert_eq!(tri.len(), tri_len(p));
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in 0..=i {
            m[(i, j)] = tri[k];
            m[(j, i)] = tri[k];
            k += 1;
        }
    }
    m
}

/// Relative Frobenius asymmetry ||M - M^T||_F / max(||M||_F, eps).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let diff = m - m.transpose();
    diff.norm() / m.norm().max(f64::MIN_POSITIVE)
}

pub fn check_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    let asym = asymmetry(m);
    if asym > rel_tol {
        return Err(Error::NotSymmetric { asym });
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Checks that `m` is symmetric and PSD up to `-1e-9 * trace` on the
/// minimum eigenvalue. Returns the offending eigenvalue on failure.
pub fn check_psd(m: &DMatrix<f64>, id: &str) -> Result<()> {
    check_symmetric(m, 1e-9)?;
    let min_eig = min_eigenvalue(m);
    let floor = -1e-9 * m.trace().abs().max(f64::MIN_POSITIVE);
    if min_eig < floor {
        return Err(Error::NotPsd {
            id: id.to_string(),
            min_eig,
        });
    }
    Ok(())
}

/// Lower-triangular factor L with `L * L^T = m` for a PSD matrix.
///
/// Falls back to an eigendecomposition with negative eigenvalues clamped
/// to zero when the strict Cholesky fails, so boundary PSD matrices
/// (including rank-deficient ones) are accepted. The fallback factor is
/// not triangular but still satisfies `L * L^T = m` up to clamping.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m, 1e-8)?;
    let sym = (m + m.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.unpack());
    }
    let min_eig = min_eigenvalue(&sym);
    if min_eig < -1e-9 * sym.trace().abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            id: "psd_factor".to_string(),
            min_eig,
        });
    }
    let eig = sym.symmetric_eigen();
    let p = eig.eigenvalues.len();
    let mut factor = eig.eigenvectors;
    for j in 0..p {
        let scale = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..p {
            factor[(i, j)] *= scale;
        }
    }
    Ok(factor)
}

/// Project a symmetric matrix onto the PSD cone by clamping negative
/// eigenvalues at zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Cholesky of a strictly positive-definite matrix, with log-determinant
/// and a linear solver. Used for MVN density evaluation.
pub struct SpdChol {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdChol {
    pub fn new(m: &DMatrix<f64>) -> Option<SpdChol> {
        let sym = (m + m.transpose()) * 0.5;
        sym.cholesky().map(|chol| SpdChol { chol })
    }

    pub fn log_det(&self) -> f64 {
        self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pack_unpack_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let tri = pack_lower(&m);
        assert_eq!(tri.len(), 6);
        let back = unpack_lower(&tri, 3);
        assert_eq!(m, back);
    }

    #[test]
    fn tri_dim_inverts_tri_len() {
        for p in 1..10 {
            assert_eq!(tri_dim(tri_len(p)), Some(p));
        }
        assert_eq!(tri_dim(4), None);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = psd_factor(&m).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn psd_factor_handles_rank_deficient() {
        // rank-1 matrix: strict Cholesky fails, eigen fallback succeeds
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let l = psd_factor(&m).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-9);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(psd_factor(&m).is_err());
    }

    #[test]
    fn spd_chol_log_det() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let c = SpdChol::new(&m).unwrap();
        assert_relative_eq!(c.log_det(), (4.0f64).ln(), epsilon = 1e-12);
    }
}
