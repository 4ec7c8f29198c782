use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::bench::config::{load_config, DatasetSelector, ExperimentSpec, SuiteConfig, SuiteSettings};
use crate::bench::table::{CsvSink, ResultRow};
use crate::dataio::{
    load_manifest, load_mnist_idx, split_by_group, standardize, synth_audio_dataset,
    three_way_split, LabeledDataset, SplitFractions, SynthAudioConfig, MNIST_TRAIN_FILES,
};
use crate::error::{Error, Result};
use crate::models::{build_model, evaluate, train_with_observer, EpochRecord, ModelKind};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    /// Rows are appended here as each experiment finishes.
    pub csv_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub eval: LabeledDataset,
    pub test: LabeledDataset,
}

/// Loads and splits a dataset. MNIST uses the 60k training file split
/// 50000/5000/5000 with raw `[0, 1]` pixels; audio sets are split by clip
/// and standardized per feature with training statistics.
pub fn prepare_dataset(selector: &DatasetSelector, s: &SuiteSettings) -> Result<Splits> {
    match selector {
        DatasetSelector::Mnist => {
            let (img, lbl) = MNIST_TRAIN_FILES;
            let (ip, lp) = (s.mnist_dir.join(img), s.mnist_dir.join(lbl));
            if !ip.is_file() || !lp.is_file() {
                return Err(Error::Dataset(format!("MNIST files not found in {}", s.mnist_dir.display())));
            }
            let full = load_mnist_idx(ip, lp)?;
            let (train, eval, test) = three_way_split(&full, SplitFractions::default(), s.split_seed)?;
            Ok(Splits { train, eval, test })
        }
        DatasetSelector::SynthAudio => {
            let mut cfg = SynthAudioConfig::one_patch_clips(s.synth_classes, s.synth_per_class);
            cfg.params = s.spectrogram();
            cfg.clip_samples = cfg.params.samples_for_patches(1);
            if let Some(sec) = s.synth_clip_seconds {
                cfg = cfg.with_clip_seconds(sec);
            }
            let (data, clips) = synth_audio_dataset(&cfg, s.synth_seed)?;
            audio_splits(&data, &clips, s)
        }
        DatasetSelector::Manifest(path) => {
            if !path.is_file() {
                return Err(Error::Dataset(format!("manifest {} not found", path.display())));
            }
            let (data, _, files) = load_manifest(path, &s.spectrogram())?;
            audio_splits(&data, &files, s)
        }
    }
}

fn audio_splits(data: &LabeledDataset, groups: &[usize], s: &SuiteSettings) -> Result<Splits> {
    let fractions = SplitFractions {
        train: s.audio_train_fraction,
        eval: s.audio_eval_fraction,
        test: 1.0 - s.audio_train_fraction - s.audio_eval_fraction,
    };
    let [a, b, c] = split_by_group(groups, fractions, s.split_seed)?;
    let (train, rest) = standardize(&data.subset(&a)?, &[&data.subset(&b)?, &data.subset(&c)?])?;
    let [eval, test]: [LabeledDataset; 2] = rest.try_into().expect("two sets in, two out");
    Ok(Splits { train, eval, test })
}

fn flattened(set: &LabeledDataset) -> Result<LabeledDataset> {
    let n = set.len();
    let inputs = set.inputs().clone().reshape(&[n, set.sample_len()])?;
    LabeledDataset::new(inputs, set.labels().to_vec(), set.class_count())
}

fn run_one(
    spec: &ExperimentSpec,
    data: &Splits,
    seed: u64,
    epochs: usize,
    progress: &mut dyn FnMut(&str),
) -> Result<ResultRow> {
    let mut model_cfg = spec.model.clone();
    let flat;
    let data = if model_cfg.kind == ModelKind::Mlp && data.train.sample_shape().len() > 1 {
        flat = Splits {
            train: flattened(&data.train)?,
            eval: flattened(&data.eval)?,
            test: flattened(&data.test)?,
        };
        &flat
    } else {
        data
    };
    let sample = data.train.sample_shape();
    if model_cfg.kind == ModelKind::Vgg9 {
        if sample.len() != 3 || sample[2] != 1 {
            return Err(Error::Shape(format!("vgg9 needs H×W×1 patches, dataset has {sample:?}")));
        }
        model_cfg.input_hw = (sample[0], sample[1]);
        model_cfg.classes = data.train.class_count();
    }
    let mut model = build_model(&model_cfg, seed)?;
    let train_cfg = crate::models::TrainConfig {
        seed,
        epochs,
        ..spec.train
    };
    let name = &spec.name;
    let mut report = |e: &EpochRecord| {
        progress(&format!(
            "{name} seed {seed} epoch {}/{epochs}: loss {:.4} eval {:.2}% ({:.1}s)",
            e.epoch + 1,
            e.train_loss,
            100.0 * e.eval_accuracy,
            e.seconds
        ))
    };
    let outcome = train_with_observer(&mut model, &data.train, &data.eval, &train_cfg, &mut report)?;
    model.load_state(&outcome.best_state)?;
    let eval = match outcome.history.best_eval_accuracy {
        Some(a) => a,
        None => evaluate(&mut model, &data.eval)?,
    };
    let test = evaluate(&mut model, &data.test)?;
    let timing = outcome.history.mean_seconds_per_epoch();
    Ok(ResultRow {
        experiment: spec.name.clone(),
        architecture: model_cfg.architecture_label(),
        activation: model_cfg.activation.name().into(),
        eval_accuracy: Some(100.0 * eval),
        test_accuracy: Some(100.0 * test),
        seconds_per_epoch: timing.map(|t| t.0),
        seconds_per_epoch_std: timing.map(|t| t.1),
        seed,
        error: String::new(),
    })
}

/// Runs every experiment in order. A failing experiment yields an error row
/// and the suite continues; only CSV I/O failures abort the run.
pub fn run_suite(
    suite: &SuiteConfig,
    opts: &RunOptions,
    mut progress: impl FnMut(&str),
) -> Result<Vec<ResultRow>> {
    let mut sink = opts.csv_path.as_ref().map(CsvSink::create).transpose()?;
    let mut cache: BTreeMap<DatasetSelector, std::result::Result<Splits, String>> = BTreeMap::new();
    let mut rows = Vec::new();
    for spec in &suite.experiments {
        let data = cache
            .entry(spec.dataset.clone())
            .or_insert_with(|| prepare_dataset(&spec.dataset, &suite.settings).map_err(|e| e.to_string()));
        let base_seed = opts.seed.unwrap_or(spec.train.seed);
        let epochs = opts.epochs.unwrap_or(spec.train.epochs);
        for r in 0..spec.repetitions {
            let seed = base_seed.wrapping_add(r as u64);
            let result = match data {
                Ok(d) => run_one(spec, d, seed, epochs, &mut progress).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            let row = result.unwrap_or_else(|error| ResultRow {
                experiment: spec.name.clone(),
                architecture: spec.model.architecture_label(),
                activation: spec.model.activation.name().into(),
                eval_accuracy: None,
                test_accuracy: None,
                seconds_per_epoch: None,
                seconds_per_epoch_std: None,
                seed,
                error,
            });
            if let Some(s) = sink.as_mut() {
                s.append(&row)?;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn run_suite_file(
    path: impl AsRef<Path>,
    opts: &RunOptions,
    progress: impl FnMut(&str),
) -> Result<Vec<ResultRow>> {
    run_suite(&load_config(path)?, opts, progress)
}
