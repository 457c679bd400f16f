//! Small dense helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::CVector;

pub(crate) type CMatrix = DMatrix<Complex64>;

/// Expand per-BS weights into the per-antenna diagonal of `Σ_i w_i B_i`.
pub(crate) fn antenna_diagonal(weights: &[f64], n_ant: usize) -> DVector<f64> {
    DVector::from_iterator(
        weights.len() * n_ant,
        weights.iter().flat_map(|&w| std::iter::repeat_n(w, n_ant)),
    )
}

/// `Σ_l λ_l h_l h_lᴴ + diag(d)`.
pub(crate) fn mac_covariance(h: &[CVector], lambda: &[f64], diag: &DVector<f64>) -> CMatrix {
    let n = diag.len();
    let mut s = CMatrix::from_diagonal(&diag.map(|x| Complex64::new(x, 0.0)));
    for (hl, &lam) in h.iter().zip(lambda) {
        if lam != 0.0 {
            s.gerc(Complex64::new(lam, 0.0), hl, hl, Complex64::new(1.0, 0.0));
        }
    }
    debug_assert_eq!(s.nrows(), n);
    s
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub(crate) fn hpd_factor(a: CMatrix) -> Result<Cholesky<Complex64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| Error::Numerical("matrix is not Hermitian positive definite".into()))
}

pub(crate) fn normalize(v: CVector) -> Result<CVector> {
    let n = v.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Numerical("cannot normalize a zero vector".into()));
    }
    Ok(v.unscale(n))
}
