//! The Mahalanobis metric and the squared distance it induces.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Entrywise asymmetry tolerated by [`Metric::from_matrix`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Negative squared distances down to this magnitude are rounding noise and
/// are reported as zero.
pub const NEGATIVE_DISTANCE_CLAMP: f64 = 1e-9;

/// A symmetric `d x d` matrix defining `D²(a, b) = (a-b)ᵀ M (a-b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    matrix: Array2<f64>,
}

impl Metric {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Array2::eye(dim),
        }
    }

    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: c,
            });
        }
        if r == 0 {
            return Err(Error::InvalidArgument("metric must be at least 1 x 1".into()));
        }
        let asym = linalg::max_asymmetry(matrix.view());
        if !(asym <= SYMMETRY_TOLERANCE) {
            return Err(Error::InvalidArgument(format!(
                "metric is not symmetric (max |M - Mᵀ| = {asym:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius_norm(self.matrix.view())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        linalg::min_eigenvalue(self.matrix.view())
    }

    /// `vᵀ M v` for an arbitrary vector, without clamping.
    pub fn quad_form(&self, v: ArrayView1<'_, f64>) -> f64 {
        linalg::quad_form(self.matrix.view(), v)
    }

    /// Rows of `points` multiplied by `M` (i.e. `points · M`).
    pub(crate) fn transform_rows(&self, points: ArrayView2<'_, f64>) -> Array2<f64> {
        points.dot(&self.matrix)
    }
}

/// Squared Mahalanobis distance `(a-b)ᵀ M (a-b)`.
pub fn mahalanobis_sq(metric: &Metric, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    let d = metric.dim();
    for v in [&a, &b] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let diff: Array1<f64> = &a - &b;
    Ok(clamp_sq(metric.quad_form(diff.view())))
}

pub(crate) fn clamp_sq(v: f64) -> f64 {
    if v < 0.0 && v > -NEGATIVE_DISTANCE_CLAMP {
        0.0
    } else {
        v
    }
}

/// All pairwise squared distances between the rows of `points`.
///
/// Uses `D²(a,b) = (a-b)·(Ma - Mb)` so only one `n x d x d` product is paid,
/// and the difference is formed before the dot product.
pub fn pairwise_sq(metric: &Metric, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if points.ncols() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            found: points.ncols(),
        });
    }
    let m = points.nrows();
    let transformed = metric.transform_rows(points);
    let mut out = Array2::zeros((m, m));
    let d = points.ncols();
    let mut diff = vec![0.0; d];
    let mut tdiff = vec![0.0; d];
    for a in 0..m {
        let za = points.row(a);
        let ya = transformed.row(a);
        for b in (a + 1)..m {
            let zb = points.row(b);
            let yb = transformed.row(b);
            for k in 0..d {
                diff[k] = za[k] - zb[k];
                tdiff[k] = ya[k] - yb[k];
            }
            let v = clamp_sq(linalg::dot(&diff, &tdiff));
            out[[a, b]] = v;
            out[[b, a]] = v;
        }
    }
    Ok(out)
}

/// Squared distances from every row of `points` to the matching row of
/// `centers` (`centers` indexed through `assignment`).
pub(crate) fn rowwise_sq_to(
    metric: &Metric,
    points: ArrayView2<'_, f64>,
    centers: ArrayView2<'_, f64>,
    assignment: &[usize],
) -> Array1<f64> {
    let mut diff = points.to_owned();
    for (mut row, &c) in diff.axis_iter_mut(Axis(0)).zip(assignment) {
        row -= &centers.row(c);
    }
    let transformed = diff.dot(&metric.matrix);
    diff.axis_iter(Axis(0))
        .zip(transformed.axis_iter(Axis(0)))
        .map(|(e, te)| clamp_sq(e.dot(&te)))
        .collect()
}
