//! Outer alternation between the latent and metric stages, and the
//! random-triplet SGD baseline.

use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, TrainConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::latent::{self, LatentModel};
use crate::metric::Metric;
use crate::metric_stage::{self, dense_sgd};
use crate::triplet::{hinge_argument, universe_loss};

/// Relative slack allowed when checking that the loss trace never goes up.
pub const MONOTONE_TOLERANCE: f64 = 1e-6;

/// Seconds spent per phase. Per-iteration vectors have one entry per outer
/// iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub init: f64,
    pub latent: Vec<f64>,
    pub active_set: Vec<f64>,
    pub metric: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub metric: Metric,
    pub latent_model: LatentModel,
    /// Loss after initialisation, then after every outer iteration.
    pub loss_trace: Vec<f64>,
    pub wall_times: WallTimes,
}

/// One record per outer iteration, handed to the training log sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based outer iteration.
    pub k: usize,
    /// Loss with the new latents under the previous metric.
    pub latent_stage_loss: f64,
    /// Loss with the new latents under the new metric.
    pub loss: f64,
    pub active_set_size: usize,
    pub violations: usize,
    pub latents: usize,
    pub latent_seconds: f64,
    pub active_set_seconds: f64,
    pub metric_seconds: f64,
}

/// Whether every step of `trace` is non-increasing up to `rel_tol`.
pub fn is_monotone(trace: &[f64], rel_tol: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + rel_tol * w[0].abs())
}

/// Trains a metric and latent examples, logging each outer iteration.
pub fn train_mapml(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    train_mapml_with_log(data, cfg, |r| {
        log::info!(
            "iter {}: loss {:.6} (after latent stage {:.6}), active {} of {} violated, m = {}, \
             latent {:.3}s, active set {:.3}s, sgd {:.3}s",
            r.k,
            r.loss,
            r.latent_stage_loss,
            r.active_set_size,
            r.violations,
            r.latents,
            r.latent_seconds,
            r.active_set_seconds,
            r.metric_seconds
        )
    })
}

/// [`train_mapml`] with a caller-provided sink for the per-iteration records.
pub fn train_mapml_with_log<F>(data: &Dataset, cfg: &TrainConfig, mut sink: F) -> Result<TrainResult>
where
    F: FnMut(&IterationRecord),
{
    cfg.validate()?;
    let started = Instant::now();
    let mut times = WallTimes::default();
    let mut metric = Metric::identity(data.dim());
    let mut model = latent::init_latents(data, cfg.tau, derive_seed(cfg.rng_seed, 100))?;
    let initial = universe_loss(&metric, &model)?;
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss(0));
    }
    let mut trace = vec![initial];
    times.init = started.elapsed().as_secs_f64();

    for k in 1..=cfg.outer_iters {
        let stage_cfg = cfg.with_stream(k as u64);
        let t0 = Instant::now();
        model = latent::run_latent_stage(data, &model, &metric, &stage_cfg)?;
        let latent_seconds = t0.elapsed().as_secs_f64();
        let latent_stage_loss = universe_loss(&metric, &model)?;

        let out = metric_stage::run_metric_stage(&model, &metric, &stage_cfg)?;
        metric = out.metric;
        let loss = universe_loss(&metric, &model)?;
        if !loss.is_finite() || !latent_stage_loss.is_finite() {
            return Err(Error::NonFiniteLoss(k));
        }

        let before = trace[k - 1];
        if !is_monotone(&[before, latent_stage_loss], MONOTONE_TOLERANCE) {
            log::warn!("iter {k}: latent stage raised the loss from {before} to {latent_stage_loss}");
        }
        if !is_monotone(&[latent_stage_loss, loss], MONOTONE_TOLERANCE) {
            log::warn!("iter {k}: metric stage raised the loss from {latent_stage_loss} to {loss}");
        }
        trace.push(loss);
        times.latent.push(latent_seconds);
        times.active_set.push(out.active_set_seconds);
        times.metric.push(out.sgd_seconds);
        sink(&IterationRecord {
            k,
            latent_stage_loss,
            loss,
            active_set_size: out.active_set_size,
            violations: out.violations,
            latents: model.len(),
            latent_seconds,
            active_set_seconds: out.active_set_seconds,
            metric_seconds: out.sgd_seconds,
        });
    }
    times.total = started.elapsed().as_secs_f64();
    Ok(TrainResult {
        metric,
        latent_model: model,
        loss_trace: trace,
        wall_times: times,
    })
}

/// Every example as its own latent, with zero margins.
fn identity_latents(data: &Dataset) -> LatentModel {
    LatentModel {
        latents: data.features().clone(),
        latent_labels: data.labels().to_vec(),
        membership: (0..data.len()).collect(),
        cluster_margins: vec![0.0; data.len()],
        per_class_counts: data.class_counts(),
        label_names: data.label_names().to_vec(),
    }
}

/// SGD on `inner_iters` triplets drawn uniformly from the original examples
/// with unit margin, starting from the identity. Uses `lambda`, `delta`,
/// `inner_iters` and `rng_seed` from `cfg`.
///
/// The loss trace holds the hinge loss over the sampled triplets before and
/// after training.
pub fn train_random_triplet_baseline(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let started = Instant::now();
    let classes = data.class_indices();
    if classes.len() < 2 {
        return Err(Error::InvalidDataset("the baseline needs at least two classes".into()));
    }
    if let Some(r) = classes.iter().position(|c| c.len() < 2) {
        return Err(Error::InvalidDataset(format!(
            "class {r} has fewer than 2 examples; the baseline needs a positive for every anchor"
        )));
    }
    let d = data.dim();
    let identity = Metric::identity(d);
    let steps = cfg.inner_iters;
    if steps == 0 {
        return Ok(TrainResult {
            metric: identity,
            latent_model: identity_latents(data),
            loss_trace: vec![0.0, 0.0],
            wall_times: WallTimes {
                total: started.elapsed().as_secs_f64(),
                ..WallTimes::default()
            },
        });
    }

    let labels = data.labels();
    let x = data.features();
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 2));
    let mut sampled = Vec::with_capacity(steps);
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        let own = &classes[labels[i]];
        let mut j = own[rng.random_range(0..own.len() - 1)];
        if j == i {
            j = own[own.len() - 1];
        }
        let k = loop {
            let k = rng.random_range(0..n);
            if labels[k] != labels[i] {
                break k;
            }
        };
        sampled.push((i, j, k));
    }

    let sampled_loss = |m: &Metric| -> f64 {
        let mut a = Array1::<f64>::zeros(d);
        let mut b = Array1::<f64>::zeros(d);
        sampled
            .iter()
            .map(|&(i, j, k)| {
                a.assign(&(&x.row(i) - &x.row(j)));
                b.assign(&(&x.row(i) - &x.row(k)));
                hinge_argument(0.0, m.quad_form(a.view()), m.quad_form(b.view())).max(0.0)
            })
            .sum()
    };
    let before = sampled_loss(&identity);

    let t0 = Instant::now();
    let run = dense_sgd(identity.matrix().view(), cfg.lambda, cfg.delta, steps, |s, a, b| {
        let (i, j, k) = sampled[s - 1];
        let (xi, xj, xk) = (x.row(i), x.row(j), x.row(k));
        for c in 0..d {
            a[c] = xi[c] - xj[c];
            b[c] = xi[c] - xk[c];
        }
        0.0
    })?;
    log::info!("baseline: {} of {steps} sampled triplets were active", run.active_steps);
    let metric = metric_stage::psd_project(run.average.view())?;
    let sgd_seconds = t0.elapsed().as_secs_f64();
    let after = sampled_loss(&metric);
    if !after.is_finite() {
        return Err(Error::NonFiniteLoss(1));
    }
    Ok(TrainResult {
        metric,
        latent_model: identity_latents(data),
        loss_trace: vec![before, after],
        wall_times: WallTimes {
            init: 0.0,
            latent: vec![0.0],
            active_set: vec![0.0],
            metric: vec![sgd_seconds],
            total: started.elapsed().as_secs_f64(),
        },
    })
}
