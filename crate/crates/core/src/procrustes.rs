//! Orthogonal Procrustes alignment.
//!
//! Finds the orthogonal map that best carries merged-model features onto the
//! individual-model features in Frobenius norm. The result is the structural
//! prior the regularized corrector is pulled toward.

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{RepMatrix, SquareMap};

/// Returns `U Vᵀ` where `U S Vᵀ` is the SVD of the cross-covariance
/// `z_ind · z_mtlᵀ`.
///
/// No centering is applied and the determinant is not constrained, so
/// reflections are allowed. When the cross-covariance is rank deficient the
/// result is one minimizer among many, fixed by the SVD backend.
pub fn orthogonal_procrustes(z_ind: &RepMatrix, z_mtl: &RepMatrix) -> Result<SquareMap> {
    check_pair(z_ind, z_mtl)?;
    let cross = linalg::matmul_nt(z_ind.as_mat(), z_mtl.as_mat());
    procrustes_from_cross_covariance(&cross)
}

pub(crate) fn procrustes_from_cross_covariance(cross: &faer::Mat<f64>) -> Result<SquareMap> {
    let svd = linalg::svd(cross.as_ref())?;
    SquareMap::new(linalg::matmul(svd.u.as_ref(), svd.v_transpose.as_ref()))
}

pub(crate) fn check_pair(z_ind: &RepMatrix, z_mtl: &RepMatrix) -> Result<()> {
    if z_ind.d_rep() != z_mtl.d_rep() || z_ind.n_samples() != z_mtl.n_samples() {
        return Err(Error::DimMismatch(format!(
            "individual representations are {}x{}, merged are {}x{}",
            z_ind.d_rep(),
            z_ind.n_samples(),
            z_mtl.d_rep(),
            z_mtl.n_samples()
        )));
    }
    Ok(())
}
