//! Data drawn from known latent examples plus isotropic Gaussian noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::latent::{compute_margins, LatentModel};
use crate::metric::Metric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub latents_per_class: usize,
    pub dim: usize,
    /// `(n_classes * latents_per_class) x dim`, class-major. Drawn uniformly
    /// from `[0, 1)^dim` when absent.
    pub true_latents: Option<Array2<f64>>,
    pub noise_sigma: f64,
    pub samples_per_latent: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.latents_per_class == 0 || self.dim == 0 || self.samples_per_latent == 0 {
            return Err(Error::InvalidConfig("synthetic counts must all be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if let Some(z) = &self.true_latents {
            let want = (self.n_classes * self.latents_per_class, self.dim);
            if z.dim() != want {
                return Err(Error::InvalidConfig(format!(
                    "true_latents is {:?}, expected {want:?}",
                    z.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Samples a dataset and returns it with the generating latent model
/// (memberships and Euclidean margins filled in). Examples are ordered by
/// latent, latents by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, LatentModel)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.n_classes * spec.latents_per_class;
    let latents = match &spec.true_latents {
        Some(z) => z.clone(),
        None => Array2::from_shape_simple_fn((m, spec.dim), || rng.random::<f64>()),
    };
    let latent_labels: Vec<usize> = (0..m).map(|o| o / spec.latents_per_class).collect();
    let n = m * spec.samples_per_latent;
    let membership: Vec<usize> = (0..n).map(|i| i / spec.samples_per_latent).collect();
    let mut features = Array2::<f64>::zeros((n, spec.dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        row.assign(&latents.row(membership[i]));
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        features.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let class_ids: Vec<usize> = membership.iter().map(|&o| latent_labels[o]).collect();
    let data = Dataset::from_class_ids(features, &class_ids)?;
    let model = LatentModel {
        latents,
        latent_labels,
        membership,
        cluster_margins: vec![0.0; m],
        per_class_counts: vec![spec.latents_per_class; spec.n_classes],
        label_names: data.label_names().to_vec(),
    };
    let model = compute_margins(&data, &model, &Metric::identity(spec.dim))?;
    Ok((data, model))
}
