//! Small dense helpers shared by the stages.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn quad_form(m: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&m.dot(&v))
}

pub(crate) fn frobenius_norm(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn max_asymmetry(m: ArrayView2<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (m[[i, j]] - m[[j, i]]).abs();
            if gap.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(gap);
        }
    }
    worst
}

pub(crate) fn symmetrize(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    let n = out.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            out[[i, j]] = avg;
            out[[j, i]] = avg;
        }
    }
    out
}

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix.
pub(crate) fn symmetric_eigen(m: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    m.to_owned()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigen(e.to_string()))
}

pub(crate) fn min_eigenvalue(m: ArrayView2<'_, f64>) -> Result<f64> {
    let (w, _) = symmetric_eigen(m)?;
    Ok(w.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `V diag(w) Vᵀ` with `w` clamped at zero, exactly symmetric on return.
pub(crate) fn reconstruct_clamped(w: &Array1<f64>, v: &Array2<f64>) -> Array2<f64> {
    let mut scaled = v.clone();
    Zip::from(scaled.columns_mut())
        .and(w)
        .for_each(|mut col, &lam| col *= lam.max(0.0));
    let out = scaled.dot(&v.t());
    symmetrize(out.view())
}
