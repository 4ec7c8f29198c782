use std::path::PathBuf;

use actnet::dataio::{load_mnist_idx, LabeledDataset, MNIST_TRAIN_FILES};
use actnet::layers::DenseLayer;
use actnet::models::{build_mlp, build_vgg9, data_loss, evaluate, train, ModelConfig, TrainConfig};
use actnet::rng::Rng;
use actnet::{ActivationKind, Layer, Mode, Model, Tensor};
use proptest::prelude::*;

/// A single linear layer whose logits equal its input (plus `shift`).
fn passthrough(classes: usize, shift: f64) -> Model {
    let mut w = Tensor::zeros(&[classes, classes]).unwrap();
    for c in 0..classes {
        w.data_mut()[c * classes + c] = 1.0;
    }
    let b = Tensor::full(&[classes], shift).unwrap();
    Model::from_layers(vec![Layer::Dense(DenseLayer::new(w, b, None).unwrap())], &[classes], 0).unwrap()
}

#[test]
fn constant_predictor_scores_one_on_its_class() {
    let w = Tensor::zeros(&[4, 3]).unwrap();
    let b = Tensor::from_vec(vec![0.0, 0.0, 5.0, 0.0]).unwrap();
    let mut m = Model::from_layers(vec![Layer::Dense(DenseLayer::new(w, b, None).unwrap())], &[3], 0).unwrap();
    let mut rng = Rng::new(1);
    let x = Tensor::new(&[9, 3], (0..27).map(|_| rng.standard_normal()).collect()).unwrap();
    let only_two = LabeledDataset::new(x.clone(), vec![2; 9], 4).unwrap();
    assert_eq!(evaluate(&mut m, &only_two).unwrap(), 1.0);
    let only_one = LabeledDataset::new(x, vec![1; 9], 4).unwrap();
    assert_eq!(evaluate(&mut m, &only_one).unwrap(), 0.0);
}

#[test]
fn accuracy_equals_confusion_trace_ratio() {
    // predictions are the argmax of each one-hot-ish input row
    let predicted = [0, 1, 2, 2, 1, 0, 0, 2, 1, 1, 2, 0, 1, 2, 0, 0, 1, 2, 2, 1];
    let labels = vec![0, 1, 2, 1, 1, 0, 2, 2, 0, 1, 2, 0, 2, 2, 0, 1, 1, 2, 0, 1];
    let mut confusion = [[0usize; 3]; 3];
    for (&p, &l) in predicted.iter().zip(&labels) {
        confusion[l][p] += 1;
    }
    let trace: usize = (0..3).map(|c| confusion[c][c]).sum();
    assert_eq!(trace, 14);
    let rows: Vec<Vec<f64>> = predicted
        .iter()
        .map(|&p| (0..3).map(|c| if c == p { 2.0 } else { 0.5 }).collect())
        .collect();
    let set = LabeledDataset::new(Tensor::from_rows(&rows).unwrap(), labels, 3).unwrap();
    let acc = evaluate(&mut passthrough(3, 0.0), &set).unwrap();
    assert_eq!(acc, trace as f64 / 20.0);
}

#[test]
fn evaluate_rejects_an_empty_or_mismatched_set() {
    let set = LabeledDataset::new(Tensor::zeros(&[2, 4]).unwrap(), vec![0, 1], 4).unwrap();
    assert!(evaluate(&mut passthrough(3, 0.0), &set).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluate_ignores_a_shift_of_all_logits(seed in 0u64..10_000, shift in -1e3f64..1e3) {
        let mut rng = Rng::new(seed);
        let x = Tensor::new(&[30, 5], (0..150).map(|_| rng.standard_normal()).collect()).unwrap();
        let labels: Vec<usize> = (0..30).map(|_| (rng.next_u64() % 5) as usize).collect();
        let set = LabeledDataset::new(x, labels, 5).unwrap();
        let a = evaluate(&mut passthrough(5, 0.0), &set).unwrap();
        let b = evaluate(&mut passthrough(5, shift), &set).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn blobs(n: usize, dim: usize, classes: usize, seed: u64) -> LabeledDataset {
    let mut rng = Rng::new(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| 3.0 * rng.standard_normal()).collect())
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        data.extend(centers[c].iter().map(|m| m + 0.3 * rng.standard_normal()));
        labels.push(c);
    }
    LabeledDataset::new(Tensor::new(&[n, dim], data).unwrap(), labels, classes).unwrap()
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let set = blobs(60, 8, 3, 0);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 10,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut paths = Vec::new();
    for run in 0..2 {
        let mut m = build_mlp(&ModelConfig::mlp(&[8, 16, 3], ActivationKind::ELU), 4).unwrap();
        let out = train(&mut m, &set, &set, &cfg).unwrap();
        m.load_state(&out.best_state).unwrap();
        let p = dir.path().join(format!("run{run}.ckpt"));
        m.save_checkpoint(&p).unwrap();
        paths.push(p);
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());

    let mut other = build_mlp(&ModelConfig::mlp(&[8, 16, 3], ActivationKind::ELU), 5).unwrap();
    other.load_checkpoint(&paths[0]).unwrap();
    let mut m = build_mlp(&ModelConfig::mlp(&[8, 16, 3], ActivationKind::ELU), 4).unwrap();
    m.load_checkpoint(&paths[0]).unwrap();
    assert_eq!(evaluate(&mut m, &set).unwrap(), evaluate(&mut other, &set).unwrap());
}

#[test]
fn vgg9_batch_of_two_patches_gives_distributions() {
    let mut m = build_vgg9(&ModelConfig::vgg9(ActivationKind::RELU, true, true), 0).unwrap();
    let mut rng = Rng::new(2);
    let x = Tensor::new(&[2, 128, 128, 1], (0..2 * 128 * 128).map(|_| rng.standard_normal()).collect()).unwrap();
    let p = m.predict_proba(&x).unwrap();
    assert_eq!(p.shape(), &[2, 10]);
    for r in 0..2 {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    // inference is deterministic even with dropout in the stack
    let again = m.predict_proba(&x).unwrap();
    assert_eq!(p, again);
    let logits = m.forward(&x, Mode::Infer).unwrap();
    assert!(logits.all_finite());
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

#[test]
fn every_activation_memorizes_64_mnist_digits() {
    let dir = mnist_dir();
    let (img, lbl) = MNIST_TRAIN_FILES;
    if !dir.join(img).is_file() {
        eprintln!("skipping: MNIST not found in {}", dir.display());
        return;
    }
    let full = load_mnist_idx(dir.join(img), dir.join(lbl)).unwrap();
    let subset = full.subset(&(0..64).collect::<Vec<_>>()).unwrap();
    // batch 16 so 64 samples still give four steps per epoch
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 16,
        seed: 0,
        ..TrainConfig::default()
    };
    for kind in ActivationKind::ALL {
        let mut m = build_mlp(&ModelConfig::mlp(&[784, 2048, 2048, 512, 10], kind), 0).unwrap();
        let out = train(&mut m, &subset, &subset, &cfg).unwrap();
        let loss = data_loss(&mut m, &subset).unwrap();
        assert!(loss < 0.05, "{kind}: data term {loss} after 50 epochs");
        assert!(out.history.epochs.iter().all(|e| e.train_loss.is_finite()));
    }
}
