mod common;

use common::*;
use mapml::driver::{is_monotone, train_mapml_with_log, MONOTONE_TOLERANCE};
use mapml::eval::{add_gaussian_noise, evaluate, ReferenceSet};
use mapml::latent::init_latents;
use mapml::triplet::universe_loss;
use mapml::{train_mapml, train_random_triplet_baseline, Dataset, Metric, TrainConfig};
use ndarray::Array2;

fn quick(outer: usize) -> TrainConfig {
    TrainConfig {
        outer_iters: outer,
        inner_iters: 500,
        rng_seed: 17,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_outer_iterations_return_the_initial_state() {
    let mut rng = rng(1);
    let data = blobs(&mut rng, 2, 30, 3, 1.0, 2.0);
    let cfg = quick(0);
    let result = train_mapml(&data, &cfg).unwrap();
    assert_eq!(result.metric, Metric::identity(3));
    let init = init_latents(&data, cfg.tau, mapml::config::derive_seed(cfg.rng_seed, 100)).unwrap();
    assert_eq!(result.latent_model, init);
    assert_eq!(result.loss_trace, vec![universe_loss(&Metric::identity(3), &init).unwrap()]);
}

#[test]
fn separable_gaussians_train_monotonically_and_beat_euclid() {
    let mut rng = rng(2);
    // Informative first axis, noisy second axis.
    let mut make = |n: usize| {
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let r = i % 2;
            let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let h: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            x[[i, 0]] = if r == 0 { -1.5 } else { 1.5 } + 0.3 * g;
            x[[i, 1]] = 3.0 * h;
            y.push(r);
        }
        Dataset::from_class_ids(x, &y).unwrap()
    };
    let train = make(60);
    let test = make(200);
    let cfg = TrainConfig { tau: 10.0, outer_iters: 5, inner_iters: 2000, rng_seed: 3, ..TrainConfig::default() };
    let mut records = Vec::new();
    let result = train_mapml_with_log(&train, &cfg, |r| records.push(r.clone())).unwrap();
    assert_eq!(result.loss_trace.len(), 6);
    assert_eq!(records.len(), 5);
    assert!(is_monotone(&result.loss_trace, MONOTONE_TOLERANCE), "{:?}", result.loss_trace);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.k, k + 1);
        assert_eq!(r.loss, result.loss_trace[k + 1]);
    }
    let learned = evaluate(&test, &ReferenceSet::original(&train), &result.metric, 3).unwrap();
    let euclid = evaluate(&test, &ReferenceSet::original(&train), &Metric::identity(2), 3).unwrap();
    assert!(learned.error_rate <= euclid.error_rate, "{} > {}", learned.error_rate, euclid.error_rate);
}

#[test]
fn collapsed_classes_reach_zero_loss() {
    let mut x = Array2::<f64>::zeros((40, 2));
    let mut y = Vec::new();
    for i in 0..40 {
        let r = i % 4;
        x[[i, 0]] = 3.0 * (r % 2) as f64;
        x[[i, 1]] = 3.0 * (r / 2) as f64;
        y.push(r);
    }
    let data = Dataset::from_class_ids(x, &y).unwrap();
    let cfg = TrainConfig { tau: 20.0, outer_iters: 2, inner_iters: 200, ..TrainConfig::default() };
    let result = train_mapml(&data, &cfg).unwrap();
    assert!(result.latent_model.cluster_margins.iter().all(|&m| m == 0.0));
    assert_eq!(*result.loss_trace.last().unwrap(), 0.0);
}

#[test]
fn training_is_reproducible() {
    let mut rng = rng(4);
    let data = blobs(&mut rng, 3, 25, 4, 1.0, 1.0);
    let a = train_mapml(&data, &quick(3)).unwrap();
    let b = train_mapml(&data, &quick(3)).unwrap();
    assert_eq!(a.metric, b.metric);
    assert_eq!(a.latent_model, b.latent_model);
    let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loss_trace), bits(&b.loss_trace));
    let other = train_mapml(&data, &TrainConfig { rng_seed: 18, ..quick(3) }).unwrap();
    assert_ne!(other.metric, a.metric);
}

#[test]
fn baseline_without_steps_is_the_identity() {
    let mut rng = rng(6);
    let data = blobs(&mut rng, 2, 10, 3, 1.0, 1.0);
    let result = train_random_triplet_baseline(&data, &TrainConfig { inner_iters: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(result.metric, Metric::identity(3));
    assert_eq!(result.latent_model.len(), data.len());
    assert_eq!(result.latent_model.membership, (0..data.len()).collect::<Vec<_>>());
}

#[test]
fn baseline_is_seeded_and_feasible() {
    let mut rng = rng(7);
    let data = blobs(&mut rng, 3, 20, 4, 1.0, 1.0);
    let cfg = TrainConfig { inner_iters: 1000, delta: 3.0, rng_seed: 5, ..TrainConfig::default() };
    let a = train_random_triplet_baseline(&data, &cfg).unwrap();
    let b = train_random_triplet_baseline(&data, &cfg).unwrap();
    assert_eq!(a.metric, b.metric);
    assert!(jacobi_min_eigenvalue(a.metric.matrix()) >= -1e-9);
    assert!(a.metric.frobenius_norm() <= 3.0 + 1e-9);
    assert!(a.loss_trace[1] <= a.loss_trace[0]);
}

#[test]
fn baseline_needs_two_members_per_class() {
    let x = Array2::from_shape_fn((5, 2), |(i, j)| (i + j) as f64);
    let data = Dataset::from_class_ids(x, &[0, 0, 0, 0, 1]).unwrap();
    assert!(train_random_triplet_baseline(&data, &TrainConfig::default()).is_err());
}

#[test]
fn latent_training_resists_training_noise_better_than_the_baseline() {
    let mut rng = rng(8);
    let all = blobs(&mut rng, 2, 120, 6, 0.4, 0.8);
    let even: Vec<usize> = (0..all.len()).step_by(2).collect();
    let odd: Vec<usize> = (1..all.len()).step_by(2).collect();
    let (clean, test) = (all.select(&even).unwrap(), all.select(&odd).unwrap());
    let noisy = add_gaussian_noise(&clean, 1.5, 21).unwrap();
    let cfg = TrainConfig { tau: 10.0, outer_iters: 5, inner_iters: 2000, rng_seed: 1, ..TrainConfig::default() };
    let ours = train_mapml(&noisy, &cfg).unwrap();
    let theirs = train_random_triplet_baseline(&noisy, &cfg).unwrap();
    let ours_err = evaluate(&test, &ReferenceSet::latent(&ours.latent_model).unwrap(), &ours.metric, 3).unwrap();
    let theirs_err = evaluate(&test, &ReferenceSet::original(&noisy), &theirs.metric, 3).unwrap();
    assert!(ours_err.error_rate <= theirs_err.error_rate, "{} > {}", ours_err.error_rate, theirs_err.error_rate);
}
