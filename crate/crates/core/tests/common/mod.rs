#![allow(dead_code)]

use std::path::PathBuf;

use mapml::{Dataset, LatentModel, Metric};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric PSD matrix `AAᵀ + floor·I`.
pub fn random_psd_matrix(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Array2<f64> {
    let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    let mut m = a.dot(&a.t());
    for i in 0..d {
        m[[i, i]] += floor;
    }
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

pub fn random_metric(rng: &mut ChaCha8Rng, d: usize) -> Metric {
    Metric::from_matrix(random_psd_matrix(rng, d, 0.1)).unwrap()
}

/// Latent model with `m` latents spread over `classes` classes and no
/// members.
pub fn random_latent_model(rng: &mut ChaCha8Rng, m: usize, d: usize, classes: usize) -> LatentModel {
    let latents = Array2::from_shape_fn((m, d), |_| rng.random_range(-2.0..2.0));
    let latent_labels: Vec<usize> = (0..m).map(|o| if o < classes { o } else { rng.random_range(0..classes) }).collect();
    let mut per_class_counts = vec![0; classes];
    for &r in &latent_labels {
        per_class_counts[r] += 1;
    }
    LatentModel {
        latents,
        latent_labels,
        membership: Vec::new(),
        cluster_margins: (0..m).map(|_| rng.random_range(0.0..1.5)).collect(),
        per_class_counts,
        label_names: (0..classes).map(|r| format!("c{r}")).collect(),
    }
}

/// Gaussian blobs, one per class, centred on a scaled random direction.
pub fn blobs(rng: &mut ChaCha8Rng, classes: usize, per_class: usize, d: usize, spread: f64, sep: f64) -> Dataset {
    let centres = Array2::from_shape_fn((classes, d), |_| rng.random_range(-sep..sep));
    let n = classes * per_class;
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for r in 0..classes {
        for k in 0..per_class {
            let i = r * per_class + k;
            for c in 0..d {
                let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                x[[i, c]] = centres[[r, c]] + spread * g;
            }
            y.push(r);
        }
    }
    Dataset::from_class_ids(x, &y).unwrap()
}

/// Naive `(a-b)ᵀM(a-b)` with explicit loops.
pub fn naive_sq(m: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            total += (a[i] - b[i]) * m[[i, j]] * (a[j] - b[j]);
        }
    }
    total
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_min_eigenvalue(m: &Array2<f64>) -> f64 {
    let d = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[[i, j]] * a[[i, j]]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[[i, i]]).fold(f64::INFINITY, f64::min)
}

/// Directory holding the MNIST IDX files, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let base = std::env::var_os("MAPML_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let dir = base.join("mnist");
    let present = ["train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"]
        .iter()
        .any(|f| dir.join(f).exists());
    present.then_some(dir)
}
