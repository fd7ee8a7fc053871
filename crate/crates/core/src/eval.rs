//! k-nearest-neighbour classification under a learned metric.
//!
//! Tie rules: among equal distances the lower reference index is nearer; a
//! vote tie goes to the tied class whose nearest neighbour is closest.
//! Predictions are compared with test labels by label name, so reference
//! and test sets may index their classes differently.

use std::fmt;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::latent::LatentModel;
use crate::metric::Metric;

pub const DEFAULT_K: usize = 3;

const QUERY_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    Latent,
    Original,
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMode::Latent => "latent",
            ReferenceMode::Original => "original",
        })
    }
}

/// Labelled reference points for k-NN.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    points: Array2<f64>,
    labels: Vec<usize>,
    label_names: Vec<String>,
    mode: ReferenceMode,
}

impl ReferenceSet {
    pub fn new(points: Array2<f64>, labels: Vec<usize>, label_names: Vec<String>, mode: ReferenceMode) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InvalidArgument("reference set is empty".into()));
        }
        if labels.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= label_names.len()) {
            return Err(Error::InvalidArgument(format!("reference label {bad} has no name")));
        }
        Ok(Self {
            points,
            labels,
            label_names,
            mode,
        })
    }

    /// The examples of `data` as references.
    pub fn original(data: &Dataset) -> Self {
        Self {
            points: data.features().clone(),
            labels: data.labels().to_vec(),
            label_names: data.label_names().to_vec(),
            mode: ReferenceMode::Original,
        }
    }

    /// The latent examples of `model` as references.
    pub fn latent(model: &LatentModel) -> Result<Self> {
        Self::new(
            model.latents.clone(),
            model.latent_labels.clone(),
            model.label_names.clone(),
            ReferenceMode::Latent,
        )
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn mode(&self) -> ReferenceMode {
        self.mode
    }
}

/// References pre-multiplied by the metric, so a query costs one
/// matrix-vector product against `R·M`.
pub struct KnnIndex<'a> {
    refs: &'a ReferenceSet,
    metric: &'a Metric,
    /// `R·M`.
    projected: Array2<f64>,
    /// `rᵀ M r` per reference.
    self_terms: Array1<f64>,
}

impl<'a> KnnIndex<'a> {
    pub fn new(refs: &'a ReferenceSet, metric: &'a Metric) -> Result<Self> {
        if refs.dim() != metric.dim() {
            return Err(Error::DimensionMismatch {
                expected: metric.dim(),
                found: refs.dim(),
            });
        }
        let projected = metric.transform_rows(refs.points.view());
        let self_terms = (&projected * &refs.points).sum_axis(Axis(1));
        Ok(Self {
            refs,
            metric,
            projected,
            self_terms,
        })
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.refs.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must be in 1..={} (reference count)",
                self.refs.len()
            )));
        }
        Ok(())
    }

    /// The `k` nearest references as `(index, squared distance)`, nearest
    /// first.
    pub fn neighbors(&self, query: ArrayView1<'_, f64>, k: usize) -> Result<Vec<(usize, f64)>> {
        self.check_k(k)?;
        if query.len() != self.refs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.refs.dim(),
                found: query.len(),
            });
        }
        let cross = self.projected.dot(&query);
        let qq = self.metric.quad_form(query);
        let best = select_k(&self.self_terms, cross.view(), k);
        Ok(best
            .into_iter()
            .map(|(i, score)| (i, (score + qq).max(0.0)))
            .collect())
    }

    /// Predicted class id (in the reference label space) for one query.
    pub fn predict(&self, query: ArrayView1<'_, f64>, k: usize) -> Result<usize> {
        let nn = self.neighbors(query, k)?;
        Ok(vote(&nn, &self.refs.labels))
    }

    /// Predicted class ids for every row of `queries`.
    pub fn predict_batch(&self, queries: ArrayView2<'_, f64>, k: usize) -> Result<Vec<usize>> {
        self.check_k(k)?;
        if queries.ncols() != self.refs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.refs.dim(),
                found: queries.ncols(),
            });
        }
        let mut out = Vec::with_capacity(queries.nrows());
        let mut start = 0;
        while start < queries.nrows() {
            let end = (start + QUERY_BLOCK).min(queries.nrows());
            let cross = queries.slice(s![start..end, ..]).dot(&self.projected.t());
            for row in cross.rows() {
                let nn = select_k(&self.self_terms, row, k);
                out.push(vote(&nn, &self.refs.labels));
            }
            start = end;
        }
        Ok(out)
    }
}

/// Indices of the `k` smallest `self_terms[i] - 2 cross[i]`, ascending, ties
/// to the lower index.
fn select_k(self_terms: &Array1<f64>, cross: ArrayView1<'_, f64>, k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (i, (&t, &c)) in self_terms.iter().zip(cross.iter()).enumerate() {
        let score = t - 2.0 * c;
        if best.len() == k && score >= best[k - 1].1 {
            continue;
        }
        let pos = best.partition_point(|&(_, s)| s <= score);
        best.insert(pos, (i, score));
        best.truncate(k);
    }
    best
}

/// Majority label among sorted neighbours; a tie goes to the tied class that
/// appears first.
fn vote(neighbors: &[(usize, f64)], labels: &[usize]) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::with_capacity(neighbors.len());
    for &(i, _) in neighbors {
        let y = labels[i];
        match counts.iter_mut().find(|(c, _)| *c == y) {
            Some((_, n)) => *n += 1,
            None => counts.push((y, 1)),
        }
    }
    // counts is in order of first (nearest) appearance, so the first maximum
    // is the tied class with the closest member
    let top = counts.iter().map(|&(_, n)| n).max().unwrap_or(0);
    counts.iter().find(|&&(_, n)| n == top).map_or(0, |&(c, _)| c)
}

/// k-NN prediction for a single query; builds a throwaway index.
pub fn knn_predict(query: ArrayView1<'_, f64>, refs: &ReferenceSet, metric: &Metric, k: usize) -> Result<usize> {
    KnnIndex::new(refs, metric)?.predict(query, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub error_rate: f64,
    pub errors: usize,
    pub k: usize,
    pub reference_mode: ReferenceMode,
    pub n_test: usize,
    /// Classification wall time divided by `n_test`, excluding index setup.
    pub mean_query_time: f64,
}

/// k-NN error of `test` against `refs` under `metric`.
pub fn evaluate(test: &Dataset, refs: &ReferenceSet, metric: &Metric, k: usize) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let index = KnnIndex::new(refs, metric)?;
    let started = Instant::now();
    let predicted = index.predict_batch(test.features().view(), k)?;
    let elapsed = started.elapsed().as_secs_f64();
    let errors = predicted
        .iter()
        .zip(test.labels())
        .filter(|&(&p, &y)| refs.label_names[p] != test.label_names()[y])
        .count();
    let n_test = test.len();
    Ok(EvalReport {
        error_rate: errors as f64 / n_test as f64,
        errors,
        k,
        reference_mode: refs.mode,
        n_test,
        mean_query_time: elapsed / n_test as f64,
    })
}

/// Adds independent `N(0, sigma²)` noise to every feature; labels unchanged.
pub fn add_gaussian_noise(data: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    add_gaussian_noise_clamped(data, sigma, seed, None)
}

/// [`add_gaussian_noise`], optionally clamping every entry into `[lo, hi]`.
pub fn add_gaussian_noise_clamped(data: &Dataset, sigma: f64, seed: u64, clamp: Option<(f64, f64)>) -> Result<Dataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut features = data.features().clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        features.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    if let Some((lo, hi)) = clamp {
        features.mapv_inplace(|v| v.clamp(lo, hi));
    }
    data.with_features(features)
}
