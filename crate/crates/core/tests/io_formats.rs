mod common;

use std::io::Write;

use common::*;
use flate2::write::GzEncoder;
use flate2::Compression;
use mapml::io::{
    generate_synthetic, load_csv, load_idx, load_mnist, load_model, meta_path, save_csv, save_model, LabelColumn,
    MnistSplit, SyntheticSpec, FORMAT_VERSION, MAGIC,
};
use mapml::latent::{init_latents, run_latent_stage};
use mapml::{train_mapml, Metric, TrainConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 8, 3];
    for v in [n, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 8, 1];
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).unwrap();
    enc.finish().unwrap()
}

#[test]
fn gzipped_idx_matches_plain() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..3 * 4).map(|v| (v * 20) as u8).collect();
    let images = idx_images(3, 2, 2, &pixels);
    let labels = idx_labels(&[7, 1, 7]);
    std::fs::write(dir.path().join("a.idx"), &images).unwrap();
    std::fs::write(dir.path().join("a.lbl"), &labels).unwrap();
    std::fs::write(dir.path().join("b.idx.gz"), gzip(&images)).unwrap();
    std::fs::write(dir.path().join("b.lbl.gz"), gzip(&labels)).unwrap();
    let plain = load_idx(dir.path().join("a.idx"), dir.path().join("a.lbl")).unwrap();
    let packed = load_idx(dir.path().join("b.idx.gz"), dir.path().join("b.lbl.gz")).unwrap();
    assert_eq!(plain, packed);
    assert_eq!((plain.len(), plain.dim(), plain.n_classes()), (3, 4, 2));
    assert_eq!(plain.features()[[1, 2]], 120.0 / 255.0);
}

#[test]
fn mnist_directory_layout_is_recognised() {
    let dir = tempfile::tempdir().unwrap();
    let images = idx_images(2, 1, 3, &[0, 255, 51, 102, 153, 204]);
    std::fs::write(dir.path().join("t10k-images-idx3-ubyte.gz"), gzip(&images)).unwrap();
    std::fs::write(dir.path().join("t10k-labels-idx1-ubyte"), idx_labels(&[3, 4])).unwrap();
    let test = load_mnist(dir.path(), MnistSplit::Test).unwrap();
    assert_eq!(test.features().row(0).to_vec(), vec![0.0, 1.0, 0.2]);
    assert!(load_mnist(dir.path(), MnistSplit::Train).is_err());
}

#[test]
fn mnist_training_split_shape_and_range() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST not found; set MAPML_DATA_DIR to run this check");
        return;
    };
    let train = load_mnist(&dir, MnistSplit::Train).unwrap();
    assert_eq!((train.len(), train.dim(), train.n_classes()), (60_000, 784, 10));
    assert!(train.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(train.class_counts().iter().sum::<usize>(), 60_000);
    let names: Vec<&str> = train.label_names().iter().map(String::as_str).collect();
    assert_eq!(names, ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"]);
}

fn trained_fixture() -> (mapml::TrainResult, TrainConfig) {
    let spec = SyntheticSpec {
        n_classes: 3,
        latents_per_class: 2,
        dim: 4,
        true_latents: None,
        noise_sigma: 0.1,
        samples_per_latent: 15,
        seed: 9,
    };
    let (data, _) = generate_synthetic(&spec).unwrap();
    let cfg = TrainConfig {
        tau: 10.0,
        outer_iters: 2,
        inner_iters: 100,
        rng_seed: 4,
        ..TrainConfig::default()
    };
    (train_mapml(&data, &cfg).unwrap(), cfg)
}

#[test]
fn model_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let (result, cfg) = trained_fixture();
    save_model(&path, &result, &cfg, "mapml").unwrap();
    let loaded = load_model(&path).unwrap();
    let bits = |a: &Array2<f64>| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(loaded.metric.matrix()), bits(result.metric.matrix()));
    assert_eq!(bits(&loaded.latents), bits(&result.latent_model.latents));
    assert_eq!(loaded.latent_labels, result.latent_model.latent_labels);
    let meta = loaded.meta.as_ref().unwrap();
    assert_eq!(meta.format_version, FORMAT_VERSION);
    assert_eq!(meta.config, cfg);
    assert_eq!(meta.loss_trace, result.loss_trace);
    assert_eq!(meta.method, "mapml");

    let raw = std::fs::read(&path).unwrap();
    let (d, m) = (4usize, result.latent_model.len());
    assert_eq!(&raw[..8], MAGIC);
    assert_eq!(raw.len(), 8 + 12 + 8 * d * d + 8 * m * d + 4 * m);
    assert_eq!(u32::from_le_bytes(raw[12..16].try_into().unwrap()) as usize, d);
    assert_eq!(f64::from_le_bytes(raw[20..28].try_into().unwrap()), result.metric.matrix()[[0, 0]]);

    // The binary file stands alone without its sidecar.
    std::fs::remove_file(meta_path(&path)).unwrap();
    let bare = load_model(&path).unwrap();
    assert!(bare.meta.is_none());
    assert_eq!(bare.metric, loaded.metric);
}

#[test]
fn damaged_model_files_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let (result, cfg) = trained_fixture();
    save_model(&path, &result, &cfg, "mapml").unwrap();
    let raw = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.bin");
    std::fs::write(&cut, &raw[..raw.len() - 13]).unwrap();
    let err = load_model(&cut).unwrap_err().to_string();
    assert!(err.contains("unexpected end of payload"), "{err}");

    let mut future = raw.clone();
    future[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let newer = dir.path().join("newer.bin");
    std::fs::write(&newer, &future).unwrap();
    let err = load_model(&newer).unwrap_err().to_string();
    assert!(err.contains(&format!("version {}", FORMAT_VERSION + 1)), "{err}");
    assert!(err.contains(&format!("version {FORMAT_VERSION}")), "{err}");

    let mut wrong = raw.clone();
    wrong[0] = b'X';
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, &wrong).unwrap();
    assert!(load_model(&bad).unwrap_err().to_string().contains("magic"));

    let mut longer = raw;
    longer.push(0);
    let extra = dir.path().join("extra.bin");
    std::fs::write(&extra, &longer).unwrap();
    assert!(load_model(&extra).is_err());
}

#[test]
fn cluster_means_concentrate_around_true_latents() {
    let spec = SyntheticSpec {
        n_classes: 2,
        latents_per_class: 2,
        dim: 3,
        true_latents: None,
        noise_sigma: 0.1,
        samples_per_latent: 10_000,
        seed: 77,
    };
    let (data, truth) = generate_synthetic(&spec).unwrap();
    for o in 0..truth.len() {
        let members: Vec<usize> = (0..data.len()).filter(|&i| truth.membership[i] == o).collect();
        assert_eq!(members.len(), 10_000);
        for c in 0..3 {
            let mean = members.iter().map(|&i| data.row(i)[c]).sum::<f64>() / members.len() as f64;
            assert!((mean - truth.latents[[o, c]]).abs() <= 4.0 * 0.1 / 100.0);
        }
    }
    assert!(truth.latents.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn latent_stage_recovers_two_separated_latents() {
    let spec = SyntheticSpec {
        n_classes: 2,
        latents_per_class: 1,
        dim: 2,
        true_latents: Some(ndarray::array![[0.1, 0.2], [0.9, 0.7]]),
        noise_sigma: 0.02,
        samples_per_latent: 50,
        seed: 3,
    };
    let (data, truth) = generate_synthetic(&spec).unwrap();
    let init = init_latents(&data, 2.0, 1).unwrap();
    let model = run_latent_stage(&data, &init, &Metric::identity(2), &TrainConfig::default()).unwrap();
    assert_eq!(model.len(), 2);
    // One latent per class, so the class label is the matching.
    for o in 0..2 {
        let t = truth.latent_labels.iter().position(|&r| r == model.latent_labels[o]).unwrap();
        for c in 0..2 {
            assert!((model.latents[[o, c]] - truth.latents[[t, c]]).abs() <= 0.05);
        }
    }
}

#[test]
fn synthetic_generation_is_seed_deterministic() {
    let spec = SyntheticSpec {
        n_classes: 3,
        latents_per_class: 2,
        dim: 5,
        true_latents: None,
        noise_sigma: 0.3,
        samples_per_latent: 20,
        seed: 12,
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = generate_synthetic(&spec).unwrap();
    let (b, _) = generate_synthetic(&spec).unwrap();
    save_csv(dir.path().join("a.csv"), &a).unwrap();
    save_csv(dir.path().join("b.csv"), &b).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
    let other = SyntheticSpec { seed: 13, ..spec };
    assert_ne!(generate_synthetic(&other).unwrap().0, a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 1..40), d in 1usize..5) {
        let n = (values.len() / d).max(1);
        let x = Array2::from_shape_fn((n, d), |(i, c)| values[(i * d + c) % values.len()]);
        let labels: Vec<String> = (0..n).map(|i| format!("class-{}", i % 3)).collect();
        let data = mapml::Dataset::new(x, &labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        save_csv(&path, &data).unwrap();
        let back = load_csv(&path, &LabelColumn::Name("label".into())).unwrap();
        prop_assert_eq!(back, data);
    }
}
