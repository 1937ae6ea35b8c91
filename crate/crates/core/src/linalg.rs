//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SreError};

/// Designs whose 2-norm condition number exceeds this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Least-squares solve of `a x ≈ b` by Householder QR, guarded by the
/// singular-value condition number.
///
/// nalgebra's SVD back-substitution can lose several digits even on
/// well-conditioned systems, so the SVD only supplies the guard.
///
/// Fails with [`SreError::SingularDesign`] when `a` has fewer rows than
/// columns or its condition number exceeds [`CONDITION_LIMIT`]; there is no
/// silent fallback to a pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(SreError::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() < a.ncols() {
        return Err(SreError::SingularDesign);
    }
    if !a.iter().all(|v| v.is_finite()) || !b.iter().all(|v| v.is_finite()) {
        return Err(SreError::NonFinite("least-squares system"));
    }
    let sv = a.clone().singular_values();
    let (s_max, s_min) = (sv.max(), sv.min());
    if s_max.is_nan() || s_max <= 0.0 || s_max / s_min > CONDITION_LIMIT || s_min == 0.0 {
        return Err(SreError::SingularDesign);
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or(SreError::SingularDesign)
}

/// 2-norm condition number (ratio of extreme singular values).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let s_min = s.min();
    if s_min == 0.0 {
        f64::INFINITY
    } else {
        s.max() / s_min
    }
}

/// Symmetric square root of a positive semi-definite matrix.
///
/// Eigenvalues down to `-1e-10 * max|eig|` are accepted as round-off and
/// clipped to zero; anything more negative, or an asymmetric input, is an
/// error.
pub fn psd_sqrt(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(SreError::NotPositiveSemiDefinite);
    }
    let scale = w.amax().max(f64::MIN_POSITIVE);
    if (w - w.transpose()).amax() > 1e-10 * scale {
        return Err(SreError::NotPositiveSemiDefinite);
    }
    let sym = (w + w.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_abs = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&e| e < -1e-10 * max_abs) {
        return Err(SreError::NotPositiveSemiDefinite);
    }
    let roots = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Residual sum of squares of `y - x b`.
pub fn rss(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (y - x * b).norm_squared()
}
