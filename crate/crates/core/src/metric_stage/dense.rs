//! SGD with explicit `d x d` iterates, for directions that are not latent
//! pairs (the random-triplet baseline works on raw examples).

use ndarray::{Array1, Array2, ArrayView2};

use super::frobenius_scale;
use crate::error::{Error, Result};
use crate::triplet::hinge_argument;

pub(crate) struct DenseRun {
    /// Suffix average before the PSD projection.
    pub average: Array2<f64>,
    pub active_steps: usize,
}

/// Runs `steps` projected SGD steps from `prev`. `next(s, a, b)` fills the
/// positive and negative difference vectors of the step-`s` triplet and
/// returns its margin.
pub(crate) fn dense_sgd<F>(
    prev: ArrayView2<'_, f64>,
    lambda: f64,
    delta: f64,
    steps: usize,
    mut next: F,
) -> Result<DenseRun>
where
    F: FnMut(usize, &mut [f64], &mut [f64]) -> f64,
{
    if steps == 0 || steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "suffix averaging needs a positive even step count, got {steps}"
        )));
    }
    let d = prev.nrows();
    let p = prev.as_standard_layout().into_owned();
    let mut m = p.clone();
    let mut sum = Array2::<f64>::zeros((d, d));
    let mut a = Array1::<f64>::zeros(d);
    let mut b = Array1::<f64>::zeros(d);
    let mut active_steps = 0;

    for s in 1..=steps {
        let margin = next(
            s,
            a.as_slice_mut().expect("contiguous"),
            b.as_slice_mut().expect("contiguous"),
        );
        let da = a.dot(&m.dot(&a));
        let db = b.dot(&m.dot(&b));
        let active = hinge_argument(margin, da, db) > 0.0;
        active_steps += usize::from(active);

        let shrink = 1.0 / s as f64;
        let c = if active { 1.0 / (lambda * s as f64) } else { 0.0 };
        let ms = m.as_slice_mut().expect("contiguous");
        let ps = p.as_slice().expect("contiguous");
        let (av, bv) = (a.as_slice().expect("contiguous"), b.as_slice().expect("contiguous"));
        let mut sq = 0.0;
        for i in 0..d {
            let row = &mut ms[i * d..(i + 1) * d];
            let prow = &ps[i * d..(i + 1) * d];
            let (ai, bi) = (c * av[i], c * bv[i]);
            for j in 0..d {
                let v = row[j] - shrink * (row[j] - prow[j]) - (ai * av[j] - bi * bv[j]);
                row[j] = v;
                sq += v * v;
            }
        }
        if !sq.is_finite() {
            return Err(Error::InvalidArgument(format!("SGD diverged at step {s}")));
        }
        let theta = frobenius_scale(sq.sqrt(), delta);
        if theta != 1.0 {
            m *= theta;
        }
        if 2 * s > steps {
            sum += &m;
        }
    }
    Ok(DenseRun {
        average: sum * (2.0 / steps as f64),
        active_steps,
    })
}
