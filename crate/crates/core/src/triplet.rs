//! Latent triplet constraints and the hinge objective over them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentModel;
use crate::metric::{self, Metric};

/// `(anchor, positive, negative)` indices into a latent matrix: the anchor
/// and positive share a class, the negative does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripletConstraint {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl TripletConstraint {
    pub fn new(anchor: usize, positive: usize, negative: usize) -> Self {
        Self {
            anchor,
            positive,
            negative,
        }
    }

    /// Whether the indices form a valid constraint for the given labels.
    pub fn is_valid(&self, labels: &[usize]) -> bool {
        let m = labels.len();
        self.anchor < m
            && self.positive < m
            && self.negative < m
            && self.anchor != self.positive
            && labels[self.anchor] == labels[self.positive]
            && labels[self.negative] != labels[self.anchor]
    }
}

/// `1 + margin - (D²(o,q) - D²(o,p))`; positive means the constraint is
/// violated.
#[inline]
pub fn hinge_argument(margin: f64, d_positive: f64, d_negative: f64) -> f64 {
    1.0 + margin - (d_negative - d_positive)
}

/// Every valid triplet over the latents, ordered by anchor, then positive,
/// then negative.
pub fn triplet_universe(latent_labels: &[usize]) -> Vec<TripletConstraint> {
    let mut out = Vec::new();
    for_each_universe_triplet(latent_labels, |t| out.push(t));
    out
}

pub(crate) fn for_each_universe_triplet<F: FnMut(TripletConstraint)>(labels: &[usize], mut f: F) {
    let m = labels.len();
    for o in 0..m {
        for p in 0..m {
            if p == o || labels[p] != labels[o] {
                continue;
            }
            for q in 0..m {
                if labels[q] != labels[o] {
                    f(TripletConstraint::new(o, p, q));
                }
            }
        }
    }
}

/// Size of the triplet universe for the given labels.
pub fn universe_size(latent_labels: &[usize]) -> usize {
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for &r in latent_labels {
        *counts.entry(r).or_default() += 1;
    }
    let m = latent_labels.len();
    counts
        .values()
        .map(|&c| c * c.saturating_sub(1) * (m - c))
        .sum()
}

/// Sum of hinge losses over `triplets`, with each anchor's margin taken
/// from `model.cluster_margins`.
pub fn full_loss(metric: &Metric, model: &LatentModel, triplets: &[TripletConstraint]) -> Result<f64> {
    let m = model.len();
    if model.dim() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            found: model.dim(),
        });
    }
    let mut cache = vec![f64::NAN; m * m];
    let mut dist = |a: usize, b: usize| -> Result<f64> {
        let key = a.min(b) * m + a.max(b);
        if cache[key].is_nan() {
            cache[key] = metric::mahalanobis_sq(metric, model.latents.row(a), model.latents.row(b))?;
        }
        Ok(cache[key])
    };
    let mut total = 0.0;
    for t in triplets {
        if t.anchor >= m || t.positive >= m || t.negative >= m {
            return Err(Error::TripletOutOfRange {
                anchor: t.anchor,
                positive: t.positive,
                negative: t.negative,
                len: m,
            });
        }
        let h = hinge_argument(
            model.cluster_margins[t.anchor],
            dist(t.anchor, t.positive)?,
            dist(t.anchor, t.negative)?,
        );
        total += h.max(0.0);
    }
    Ok(total)
}

/// [`full_loss`] over the whole triplet universe without materialising it.
pub fn universe_loss(metric: &Metric, model: &LatentModel) -> Result<f64> {
    let dist = metric::pairwise_sq(metric, model.latents.view())?;
    Ok(universe_loss_from_distances(&dist, &model.latent_labels, &model.cluster_margins))
}

pub(crate) fn universe_loss_from_distances(
    dist: &Array2<f64>,
    labels: &[usize],
    margins: &[f64],
) -> f64 {
    let m = labels.len();
    let mut total = 0.0;
    let mut negatives = Vec::with_capacity(m);
    for o in 0..m {
        negatives.clear();
        negatives.extend((0..m).filter(|&q| labels[q] != labels[o]).map(|q| dist[[o, q]]));
        for p in 0..m {
            if p == o || labels[p] != labels[o] {
                continue;
            }
            let offset = 1.0 + margins[o] + dist[[o, p]];
            total += negatives.iter().map(|&dq| (offset - dq).max(0.0)).sum::<f64>();
        }
    }
    total
}
