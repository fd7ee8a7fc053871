//! Per-class latent examples.
//!
//! Each class is summarised by a handful of latent examples. The latent stage
//! alternates hard assignment of every example to its nearest same-class
//! latent under the current metric with a closed-form latent update that is
//! pulled towards the previous outer iterate:
//!
//! ```text
//! z_o = (Σ_{i∈o} x_i + γ z_o^prev) / (|o| + γ)
//! ```
//!
//! The per-cluster mean squared distance to the latent is the data-dependent
//! margin used by the metric stage.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{self, Metric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    /// `m x d`, one latent example per row.
    pub latents: Array2<f64>,
    /// Class id of every latent.
    pub latent_labels: Vec<usize>,
    /// For every original example, the latent it is assigned to.
    pub membership: Vec<usize>,
    /// Mean squared distance from each cluster's members to its latent.
    pub cluster_margins: Vec<f64>,
    /// Number of latents per class.
    pub per_class_counts: Vec<usize>,
    /// Label text per class id, copied from the training data.
    pub label_names: Vec<String>,
}

impl LatentModel {
    pub fn len(&self) -> usize {
        self.latents.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.latents.ncols()
    }

    /// Latent indices grouped by class id.
    pub fn class_latents(&self) -> Vec<Vec<usize>> {
        let n_classes = self.per_class_counts.len();
        let mut groups = vec![Vec::new(); n_classes];
        for (o, &r) in self.latent_labels.iter().enumerate() {
            if r >= groups.len() {
                groups.resize(r + 1, Vec::new());
            }
            groups[r].push(o);
        }
        groups
    }

    /// Number of original examples assigned to each latent.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.len()];
        for &o in &self.membership {
            sizes[o] += 1;
        }
        sizes
    }

    /// Checks the structural invariants against the data the model was
    /// fitted on.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        let m = self.len();
        if self.latent_labels.len() != m || self.cluster_margins.len() != m {
            return Err(Error::InvalidArgument(
                "latent labels and margins must have one entry per latent".into(),
            ));
        }
        if self.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: self.dim(),
            });
        }
        if self.membership.len() != data.len() {
            return Err(Error::InvalidArgument(format!(
                "membership has {} entries for {} examples",
                self.membership.len(),
                data.len()
            )));
        }
        for (i, (&o, &y)) in self.membership.iter().zip(data.labels()).enumerate() {
            if o >= m || self.latent_labels[o] != y {
                return Err(Error::InvalidArgument(format!(
                    "example {i} (class {y}) assigned to latent {o} of another class"
                )));
            }
        }
        Ok(())
    }
}

/// Number of latents for a class of `class_size` examples at ratio `tau` %.
pub fn latents_for_class(class_size: usize, tau: f64) -> usize {
    let m = (tau / 100.0 * class_size as f64).round() as usize;
    m.clamp(1, class_size.max(1))
}

/// Seeds latents by farthest-point selection within each class (Euclidean),
/// then assigns members and computes margins under the identity metric.
///
/// The first seed of each class is drawn uniformly with `seed`; every later
/// seed is the class member farthest from the seeds chosen so far (ties to
/// the lower row index).
pub fn init_latents(data: &Dataset, tau: f64, seed: u64) -> Result<LatentModel> {
    if !(tau > 0.0 && tau <= 100.0) {
        return Err(Error::InvalidConfig(format!("tau must be in (0, 100], got {tau}")));
    }
    let classes = data.class_indices();
    if let Some(r) = classes.iter().position(|c| c.is_empty()) {
        return Err(Error::InvalidDataset(format!("class {r} has no examples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = data.features();
    let mut rows = Vec::new();
    let mut latent_labels = Vec::new();
    let mut per_class_counts = Vec::with_capacity(classes.len());
    for (r, members) in classes.iter().enumerate() {
        let m_r = latents_for_class(members.len(), tau);
        let picked = farthest_points(x.view(), members, m_r, &mut rng);
        rows.extend(picked);
        latent_labels.extend(std::iter::repeat(r).take(m_r));
        per_class_counts.push(m_r);
    }
    let latents = x.select(Axis(0), &rows);
    let m = latents.nrows();
    let model = LatentModel {
        latents,
        latent_labels,
        membership: vec![0; data.len()],
        cluster_margins: vec![0.0; m],
        per_class_counts,
        label_names: data.label_names().to_vec(),
    };
    let identity = Metric::identity(data.dim());
    let model = assign_membership(data, &model, &identity, TrainConfig::default().tie_tolerance)?;
    compute_margins(data, &model, &identity)
}

fn farthest_points(
    x: ArrayView2<'_, f64>,
    members: &[usize],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let first = rng.random_range(0..members.len());
    let mut picked = Vec::with_capacity(count);
    let mut nearest = vec![f64::INFINITY; members.len()];
    let mut current = first;
    loop {
        picked.push(members[current]);
        nearest[current] = f64::NEG_INFINITY;
        if picked.len() == count {
            break;
        }
        let c = x.row(members[current]);
        for (slot, &i) in nearest.iter_mut().zip(members) {
            if *slot == f64::NEG_INFINITY {
                continue;
            }
            let d: f64 = x.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < *slot {
                *slot = d;
            }
        }
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (k, &d) in nearest.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = k;
            }
        }
        current = best;
    }
    picked
}

/// Nearest-latent search restricted to same-class latents, with `X·M`
/// cached so repeated sweeps under one metric only pay for `Z`-dependent
/// products.
pub(crate) struct Assigner<'a> {
    data: &'a Dataset,
    metric: &'a Metric,
    /// Per class: member rows and their `x·M` rows.
    class_rows: Vec<(Vec<usize>, Array2<f64>)>,
}

impl<'a> Assigner<'a> {
    pub(crate) fn new(data: &'a Dataset, metric: &'a Metric) -> Result<Self> {
        if metric.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: metric.dim(),
            });
        }
        let is_identity = metric
            .matrix()
            .indexed_iter()
            .all(|((i, j), &v)| v == if i == j { 1.0 } else { 0.0 });
        let class_rows = data
            .class_indices()
            .into_iter()
            .map(|rows| {
                let x_r = data.features().select(Axis(0), &rows);
                let xm = if is_identity { x_r } else { metric.transform_rows(x_r.view()) };
                (rows, xm)
            })
            .collect();
        Ok(Self {
            data,
            metric,
            class_rows,
        })
    }

    pub(crate) fn assign(&self, model: &LatentModel, tie_tolerance: f64) -> Result<Vec<usize>> {
        if model.dim() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                found: model.dim(),
            });
        }
        let groups = model.class_latents();
        let zm = self.metric.transform_rows(model.latents.view());
        let mut membership = vec![0; self.data.len()];
        for (r, (rows, xm)) in self.class_rows.iter().enumerate() {
            let candidates = groups.get(r).map(Vec::as_slice).unwrap_or(&[]);
            if candidates.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "class {r} has examples but no latent example"
                )));
            }
            let z_r = model.latents.select(Axis(0), candidates);
            let self_terms: Vec<f64> = candidates
                .iter()
                .map(|&o| model.latents.row(o).dot(&zm.row(o)))
                .collect();
            // ‖x - z‖²_M = xᵀMx - 2 xᵀMz + zᵀMz; the first term is shared.
            let cross = xm.dot(&z_r.t());
            for (k, &i) in rows.iter().enumerate() {
                let mut best = 0;
                let mut best_score = self_terms[0] - 2.0 * cross[[k, 0]];
                for c in 1..candidates.len() {
                    let score = self_terms[c] - 2.0 * cross[[k, c]];
                    if score < best_score - tie_tolerance {
                        best = c;
                        best_score = score;
                    }
                }
                membership[i] = candidates[best];
            }
        }
        Ok(membership)
    }
}

/// Assigns every example to its nearest same-class latent under `metric`;
/// ties within `tie_tolerance` go to the lower latent index.
pub fn assign_membership(
    data: &Dataset,
    model: &LatentModel,
    metric: &Metric,
    tie_tolerance: f64,
) -> Result<LatentModel> {
    let membership = Assigner::new(data, metric)?.assign(model, tie_tolerance)?;
    Ok(LatentModel {
        membership,
        ..model.clone()
    })
}

/// Closed-form latent update for fixed membership.
///
/// `anchor` is the latent matrix of the previous outer iteration. A cluster
/// with no members and `gamma = 0` keeps its anchor position.
pub fn update_latents(
    data: &Dataset,
    model: &LatentModel,
    anchor: ArrayView2<'_, f64>,
    gamma: f64,
) -> Result<LatentModel> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    if anchor.dim() != model.latents.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            found: anchor.nrows(),
        });
    }
    if model.membership.len() != data.len() {
        return Err(Error::InvalidArgument("membership does not match the data".into()));
    }
    let mut sums = Array2::<f64>::zeros(model.latents.dim());
    let mut counts = vec![0usize; model.len()];
    for (i, &o) in model.membership.iter().enumerate() {
        let mut row = sums.row_mut(o);
        row += &data.row(i);
        counts[o] += 1;
    }
    let mut latents = sums;
    for (o, mut row) in latents.axis_iter_mut(Axis(0)).enumerate() {
        let weight = counts[o] as f64 + gamma;
        if weight == 0.0 {
            row.assign(&anchor.row(o));
        } else {
            row.scaled_add(gamma, &anchor.row(o));
            row /= weight;
        }
    }
    Ok(LatentModel {
        latents,
        ..model.clone()
    })
}

/// Mean squared distance from each cluster's members to its latent
/// (0 for empty clusters).
pub fn compute_margins(data: &Dataset, model: &LatentModel, metric: &Metric) -> Result<LatentModel> {
    if metric.dim() != data.dim() || model.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: metric.dim().max(model.dim()),
        });
    }
    let dist = metric::rowwise_sq_to(
        metric,
        data.features().view(),
        model.latents.view(),
        &model.membership,
    );
    let mut sums = vec![0.0; model.len()];
    let mut counts = vec![0usize; model.len()];
    for (&o, &v) in model.membership.iter().zip(dist.iter()) {
        sums[o] += v;
        counts[o] += 1;
    }
    let cluster_margins = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64).max(0.0) })
        .collect();
    Ok(LatentModel {
        cluster_margins,
        ..model.clone()
    })
}

/// Per-class value of the latent-stage surrogate
/// `Σ_i D²(x_i, z_{f(i)}) + γ Σ_o D²(z_o, z_o^prev)`.
pub fn surrogate_objective(
    data: &Dataset,
    model: &LatentModel,
    metric: &Metric,
    anchor: ArrayView2<'_, f64>,
    gamma: f64,
) -> Result<Vec<f64>> {
    let n_classes = data.n_classes();
    let mut per_class = vec![0.0; n_classes];
    let dist = metric::rowwise_sq_to(
        metric,
        data.features().view(),
        model.latents.view(),
        &model.membership,
    );
    for (&y, &v) in data.labels().iter().zip(dist.iter()) {
        per_class[y] += v;
    }
    let identity_map: Vec<usize> = (0..model.len()).collect();
    let drift = metric::rowwise_sq_to(metric, model.latents.view(), anchor, &identity_map);
    for (&r, &v) in model.latent_labels.iter().zip(drift.iter()) {
        if r < n_classes {
            per_class[r] += gamma * v;
        }
    }
    Ok(per_class)
}

/// One latent stage: `latent_em_iters` assignment/update sweeps starting from
/// `prev`, anchored to `prev.latents`, followed by a final assignment and a
/// margin refresh under `metric`.
pub fn run_latent_stage(
    data: &Dataset,
    prev: &LatentModel,
    metric: &Metric,
    cfg: &TrainConfig,
) -> Result<LatentModel> {
    run_latent_stage_observed(data, prev, metric, cfg, |_, _| {})
}

/// [`run_latent_stage`] with a callback after every sweep's latent update.
pub fn run_latent_stage_observed<F>(
    data: &Dataset,
    prev: &LatentModel,
    metric: &Metric,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<LatentModel>
where
    F: FnMut(usize, &LatentModel),
{
    if cfg.latent_em_iters == 0 {
        return Err(Error::InvalidConfig("latent_em_iters must be at least 1".into()));
    }
    let anchor = prev.latents.clone();
    let assigner = Assigner::new(data, metric)?;
    let mut model = prev.clone();
    for sweep in 0..cfg.latent_em_iters {
        model.membership = assigner.assign(&model, cfg.tie_tolerance)?;
        model = update_latents(data, &model, anchor.view(), cfg.gamma)?;
        observe(sweep, &model);
    }
    model.membership = assigner.assign(&model, cfg.tie_tolerance)?;
    compute_margins(data, &model, metric)
}

/// Squared distance of each latent's members, in membership order. Exposed
/// for diagnostics.
pub fn member_distances(data: &Dataset, model: &LatentModel, metric: &Metric) -> Array1<f64> {
    metric::rowwise_sq_to(
        metric,
        data.features().view(),
        model.latents.view(),
        &model.membership,
    )
}
