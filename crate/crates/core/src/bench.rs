//! Multi-trial comparisons, the training-noise sweep and stage timing
//! probes. The CLI formats these; the functions themselves only compute.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, TrainConfig};
use crate::dataset::Dataset;
use crate::driver::{train_mapml, train_random_triplet_baseline, TrainResult};
use crate::error::{Error, Result};
use crate::eval::{add_gaussian_noise, evaluate, EvalReport, ReferenceMode, ReferenceSet};
use crate::latent::{init_latents, run_latent_stage};
use crate::metric::Metric;
use crate::metric_stage::build_active_set;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Identity metric, training examples as references.
    Euclid,
    /// Learned metric, latent examples as references.
    Mapml,
    /// Learned metric, training examples as references.
    MapmlO,
    /// Random-triplet SGD baseline, training examples as references.
    RandomTriplet,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Euclid, Method::Mapml, Method::MapmlO, Method::RandomTriplet];

    pub fn name(self) -> &'static str {
        match self {
            Method::Euclid => "euclid",
            Method::Mapml => "mapml",
            Method::MapmlO => "mapml-o",
            Method::RandomTriplet => "random-triplet",
        }
    }

    pub fn reference_mode(self) -> ReferenceMode {
        match self {
            Method::Mapml => ReferenceMode::Latent,
            _ => ReferenceMode::Original,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method '{s}' (expected one of euclid, mapml, mapml-o, random-triplet)"
                ))
            })
    }
}

/// Per-method results over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub reference_mode: ReferenceMode,
    /// Error rate of each trial, as a fraction.
    pub trial_errors: Vec<f64>,
    pub trial_train_seconds: Vec<f64>,
    pub trial_query_seconds: Vec<f64>,
}

impl MethodSummary {
    fn new(method: Method) -> Self {
        Self {
            method,
            reference_mode: method.reference_mode(),
            trial_errors: Vec::new(),
            trial_train_seconds: Vec::new(),
            trial_query_seconds: Vec::new(),
        }
    }

    pub fn mean_error(&self) -> f64 {
        mean(&self.trial_errors)
    }

    /// Sample standard deviation of the error rate (0 for a single trial).
    pub fn std_error(&self) -> f64 {
        sample_std(&self.trial_errors)
    }

    pub fn mean_train_seconds(&self) -> f64 {
        mean(&self.trial_train_seconds)
    }

    pub fn mean_query_seconds(&self) -> f64 {
        mean(&self.trial_query_seconds)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mu = mean(v);
    (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Seed of trial `t` derived from the base seed.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    derive_seed(base, 1_000 + trial as u64)
}

/// Trains and evaluates every method for `trials` seeded trials. The learned
/// metric of a trial is shared by `mapml` and `mapml-o`.
pub fn run_trials(
    train: &Dataset,
    test: &Dataset,
    methods: &[Method],
    trials: usize,
    cfg: &TrainConfig,
    k: usize,
) -> Result<Vec<MethodSummary>> {
    run_trials_with(test, methods, trials, cfg, k, |_, _| Ok(train.clone()))
}

/// [`run_trials`] where the training set of each trial comes from
/// `make_train(trial, trial_seed)`.
pub fn run_trials_with<F>(
    test: &Dataset,
    methods: &[Method],
    trials: usize,
    cfg: &TrainConfig,
    k: usize,
    mut make_train: F,
) -> Result<Vec<MethodSummary>>
where
    F: FnMut(usize, u64) -> Result<Dataset>,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    cfg.validate()?;
    let mut out: Vec<MethodSummary> = methods.iter().map(|&m| MethodSummary::new(m)).collect();
    for trial in 0..trials {
        let seed = trial_seed(cfg.rng_seed, trial);
        let trial_cfg = TrainConfig {
            rng_seed: seed,
            ..cfg.clone()
        };
        let data = make_train(trial, seed)?;
        let mut learned: Option<(TrainResult, f64)> = None;
        for summary in out.iter_mut() {
            let (metric, refs, seconds) = match summary.method {
                Method::Euclid => (Metric::identity(data.dim()), ReferenceSet::original(&data), 0.0),
                Method::Mapml | Method::MapmlO => {
                    if learned.is_none() {
                        let started = Instant::now();
                        let result = train_mapml(&data, &trial_cfg)?;
                        learned = Some((result, started.elapsed().as_secs_f64()));
                    }
                    let (result, seconds) = learned.as_ref().expect("trained above");
                    let refs = if summary.method == Method::Mapml {
                        ReferenceSet::latent(&result.latent_model)?
                    } else {
                        ReferenceSet::original(&data)
                    };
                    (result.metric.clone(), refs, *seconds)
                }
                Method::RandomTriplet => {
                    let started = Instant::now();
                    let result = train_random_triplet_baseline(&data, &trial_cfg)?;
                    (result.metric, ReferenceSet::original(&data), started.elapsed().as_secs_f64())
                }
            };
            let report: EvalReport = evaluate(test, &refs, &metric, k)?;
            log::info!(
                "trial {trial} {}: error {:.4}, train {seconds:.2}s",
                summary.method,
                report.error_rate
            );
            summary.trial_errors.push(report.error_rate);
            summary.trial_train_seconds.push(seconds);
            summary.trial_query_seconds.push(report.mean_query_time);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub sigma: f64,
    pub summary: MethodSummary,
}

/// For each `sigma`, trains on a noisy copy of `train` (fresh noise per
/// trial) and evaluates on the clean `test` set.
pub fn noise_sweep(
    train: &Dataset,
    test: &Dataset,
    methods: &[Method],
    sigmas: &[f64],
    trials: usize,
    cfg: &TrainConfig,
    k: usize,
) -> Result<Vec<NoiseRow>> {
    let mut rows = Vec::new();
    for (si, &sigma) in sigmas.iter().enumerate() {
        let summaries = run_trials_with(test, methods, trials, cfg, k, |_, seed| {
            add_gaussian_noise(train, sigma, derive_seed(seed, 50 + si as u64))
        })?;
        rows.extend(summaries.into_iter().map(|summary| NoiseRow { sigma, summary }));
    }
    Ok(rows)
}

/// Stage timings at one latent ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub tau: f64,
    pub latents: usize,
    /// Best-of-`repeats` wall time of one latent stage.
    pub latent_seconds: f64,
    /// Best-of-`repeats` wall time of one active-set construction.
    pub active_set_seconds: f64,
    pub active_set_size: usize,
}

/// Times one latent stage and one active-set construction under the
/// identity metric at every `tau`, at fixed `n`.
pub fn measure_stage_scaling(data: &Dataset, cfg: &TrainConfig, taus: &[f64], repeats: usize) -> Result<Vec<ScalingRow>> {
    cfg.validate()?;
    let metric = Metric::identity(data.dim());
    let repeats = repeats.max(1);
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let model = init_latents(data, tau, derive_seed(cfg.rng_seed, 100))?;
        let mut latent_best = f64::INFINITY;
        let mut active_best = f64::INFINITY;
        let mut stage = model.clone();
        let mut size = 0;
        for _ in 0..repeats {
            let started = Instant::now();
            stage = run_latent_stage(data, &model, &metric, cfg)?;
            latent_best = latent_best.min(started.elapsed().as_secs_f64());
        }
        for _ in 0..repeats {
            let started = Instant::now();
            let active = build_active_set(&stage, &metric, cfg.active_set_cap, cfg.rng_seed)?;
            active_best = active_best.min(started.elapsed().as_secs_f64());
            size = active.len();
        }
        rows.push(ScalingRow {
            tau,
            latents: model.len(),
            latent_seconds: latent_best,
            active_set_seconds: active_best,
            active_set_size: size,
        });
    }
    Ok(rows)
}
