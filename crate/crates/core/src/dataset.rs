//! Labeled feature vectors.
//!
//! Labels are stored internally as contiguous class ids `0..C`. The original
//! label text is kept alongside so that two datasets loaded separately (a
//! training and a test split, say) can be compared by label name.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from raw labels, re-indexing them to `0..C`.
    ///
    /// Class ids follow numeric order when every label parses as an integer
    /// and lexicographic order otherwise.
    pub fn new<S: AsRef<str>>(features: Array2<f64>, raw_labels: &[S]) -> Result<Self> {
        let (labels, label_names) = reindex(raw_labels);
        Self::from_parts(features, labels, label_names)
    }

    /// Builds a dataset from integer class labels (not necessarily contiguous).
    pub fn from_class_ids(features: Array2<f64>, class_ids: &[usize]) -> Result<Self> {
        let raw: Vec<String> = class_ids.iter().map(|c| c.to_string()).collect();
        Self::new(features, &raw)
    }

    fn from_parts(
        features: Array2<f64>,
        labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidDataset(format!(
                "need at least one example and one feature, got {n} x {d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {n} examples",
                labels.len()
            )));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature {v} at row {i}, column {j}"
            )));
        }
        Ok(Self {
            features,
            labels,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Example indices grouped by class id.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            groups[y].push(i);
        }
        groups
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Copy of the given rows. Labels are re-indexed over the classes that
    /// remain.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "row {bad} out of range for {} examples",
                self.len()
            )));
        }
        let features = self.features.select(Axis(0), rows);
        let raw: Vec<&str> = rows
            .iter()
            .map(|&r| self.label_names[self.labels[r]].as_str())
            .collect();
        Self::new(features, &raw)
    }

    /// Uniform random subset of `count` rows without replacement, in
    /// ascending row order.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Self> {
        if count >= self.len() {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, self.len(), count).into_vec();
        rows.sort_unstable();
        self.select(&rows)
    }

    /// Same labels, new feature matrix of identical shape.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        Self::from_parts(features, self.labels.clone(), self.label_names.clone())
    }
}

fn reindex<S: AsRef<str>>(raw: &[S]) -> (Vec<usize>, Vec<String>) {
    let numeric = raw.iter().all(|s| s.as_ref().trim().parse::<i64>().is_ok());
    let mut names: Vec<String> = raw
        .iter()
        .map(|s| s.as_ref().trim().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if numeric {
        names.sort_by_key(|s| s.parse::<i64>().unwrap_or_default());
    }
    let lookup: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let labels = raw.iter().map(|s| lookup[s.as_ref().trim()]).collect();
    (labels, names)
}
