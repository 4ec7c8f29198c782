//! Experiment config files.
//!
//! ```text
//! # comment
//! mnist_dir = data/mnist      # global settings and experiment defaults
//! epochs = 15
//!
//! [experiment]
//! name = relu
//! model = mlp
//! widths = 784-2048-2048-512-10
//! activation = relu
//! ```
//!
//! Keys before the first `[experiment]` header are global: suite settings
//! plus defaults for every experiment key. Each `[experiment]` section
//! overrides those defaults for one experiment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::activations::ActivationKind;
use crate::dataio::SpectrogramParams;
use crate::error::{Error, Result};
use crate::layers::InitScheme;
use crate::models::{ModelConfig, ModelKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DatasetSelector {
    Mnist,
    SynthAudio,
    Manifest(PathBuf),
}

impl DatasetSelector {
    fn parse(v: &str, base: &Path) -> std::result::Result<Self, String> {
        match v {
            "mnist" => Ok(DatasetSelector::Mnist),
            "synth-audio" => Ok(DatasetSelector::SynthAudio),
            other => match other.strip_prefix("manifest:") {
                Some(p) if !p.is_empty() => Ok(DatasetSelector::Manifest(base.join(p))),
                _ => Err(format!("unknown dataset '{other}' (mnist | synth-audio | manifest:<path>)")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetSelector,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSettings {
    pub mnist_dir: PathBuf,
    pub split_seed: u64,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    /// `None`: each clip is exactly one patch long.
    pub synth_clip_seconds: Option<f64>,
    pub synth_seed: u64,
    /// Sample rate for synthetic clips and expected rate of manifest files.
    pub sample_rate: u32,
    /// Fractions of clips (audio) used for train/eval; test takes the rest.
    pub audio_train_fraction: f64,
    pub audio_eval_fraction: f64,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            mnist_dir: PathBuf::from("data/mnist"),
            split_seed: 0,
            synth_classes: 10,
            synth_per_class: 20,
            synth_clip_seconds: None,
            synth_seed: 0,
            sample_rate: 22_050,
            audio_train_fraction: 0.6,
            audio_eval_fraction: 0.2,
        }
    }
}

impl SuiteSettings {
    pub fn spectrogram(&self) -> SpectrogramParams {
        SpectrogramParams::table3(self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteConfig {
    pub settings: SuiteSettings,
    pub experiments: Vec<ExperimentSpec>,
}

const GLOBAL_KEYS: &[&str] = &[
    "mnist_dir",
    "split_seed",
    "synth_classes",
    "synth_per_class",
    "synth_clip_seconds",
    "synth_seed",
    "sample_rate",
    "audio_train_fraction",
    "audio_eval_fraction",
];

const EXPERIMENT_KEYS: &[&str] = &[
    "name",
    "model",
    "widths",
    "activation",
    "bn",
    "dropout",
    "init",
    "dataset",
    "epochs",
    "batch_size",
    "learning_rate",
    "l2",
    "l2_all_params",
    "seed",
    "repetitions",
];

type Section = BTreeMap<String, (usize, String)>;

fn parse_sections(text: &str) -> Result<(Section, Vec<(usize, Section)>)> {
    let mut globals = Section::new();
    let mut sections: Vec<(usize, Section)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line != "[experiment]" {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("unknown section {line}; only [experiment] is defined"),
                });
            }
            sections.push((line_no, Section::new()));
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            reason: format!("expected key = value, got '{line}'"),
        })?;
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        let in_section = !sections.is_empty();
        let known = EXPERIMENT_KEYS.contains(&k.as_str()) || (!in_section && GLOBAL_KEYS.contains(&k.as_str()));
        if !known {
            return Err(Error::Config {
                line: line_no,
                reason: format!("unknown key '{k}'"),
            });
        }
        let target = match sections.last_mut() {
            Some((_, s)) => s,
            None => &mut globals,
        };
        if target.insert(k.clone(), (line_no, v)).is_some() {
            return Err(Error::Config {
                line: line_no,
                reason: format!("duplicate key '{k}'"),
            });
        }
    }
    Ok((globals, sections))
}

fn value<T: std::str::FromStr>(entry: Option<&(usize, String)>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    entry
        .map(|(line, v)| {
            v.parse::<T>().map_err(|e| Error::Config {
                line: *line,
                reason: format!("bad value for {key}: '{v}' ({e})"),
            })
        })
        .transpose()
}

fn parse_bool(entry: Option<&(usize, String)>, key: &str) -> Result<Option<bool>> {
    entry
        .map(|(line, v)| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(Error::Config {
                line: *line,
                reason: format!("bad boolean for {key}: '{v}'"),
            }),
        })
        .transpose()
}

fn parse_widths(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split('-')
        .map(|w| w.trim().parse::<usize>().map_err(|e| format!("'{w}': {e}")))
        .collect()
}

fn config_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<SuiteConfig> {
    let (globals, sections) = parse_sections(text)?;
    let mut settings = SuiteSettings::default();
    if let Some((_, v)) = globals.get("mnist_dir") {
        settings.mnist_dir = base.join(v);
    }
    if let Some(v) = value(globals.get("split_seed"), "split_seed")? {
        settings.split_seed = v;
    }
    if let Some(v) = value(globals.get("synth_classes"), "synth_classes")? {
        settings.synth_classes = v;
    }
    if let Some(v) = value(globals.get("synth_per_class"), "synth_per_class")? {
        settings.synth_per_class = v;
    }
    settings.synth_clip_seconds = value(globals.get("synth_clip_seconds"), "synth_clip_seconds")?;
    if let Some(v) = value(globals.get("synth_seed"), "synth_seed")? {
        settings.synth_seed = v;
    }
    if let Some(v) = value(globals.get("sample_rate"), "sample_rate")? {
        settings.sample_rate = v;
    }
    if let Some(v) = value(globals.get("audio_train_fraction"), "audio_train_fraction")? {
        settings.audio_train_fraction = v;
    }
    if let Some(v) = value(globals.get("audio_eval_fraction"), "audio_eval_fraction")? {
        settings.audio_eval_fraction = v;
    }

    let mut experiments = Vec::with_capacity(sections.len());
    for (header_line, section) in sections {
        let get = |k: &str| section.get(k).or_else(|| globals.get(k));
        let line_of = |k: &str| get(k).map_or(header_line, |(l, _)| *l);

        let name = get("name").map(|(_, v)| v.clone()).ok_or_else(|| config_err(header_line, "experiment needs a name"))?;
        let kind: ModelKind = value(get("model"), "model")?.unwrap_or(ModelKind::Mlp);
        let activation: ActivationKind = value(get("activation"), "activation")?.unwrap_or_default();
        let mut model = match kind {
            ModelKind::Mlp => {
                let (line, w) = get("widths").ok_or_else(|| config_err(header_line, "mlp experiment needs widths"))?;
                let widths = parse_widths(w).map_err(|e| config_err(*line, format!("bad widths: {e}")))?;
                ModelConfig::mlp(&widths, activation)
            }
            ModelKind::Vgg9 => ModelConfig::vgg9(activation, false, false),
        };
        model.with_bn = parse_bool(get("bn"), "bn")?.unwrap_or(false);
        model.with_dropout = parse_bool(get("dropout"), "dropout")?.unwrap_or(false);
        model.init_scheme = match get("init").map(|(l, v)| (*l, v.to_ascii_lowercase())) {
            None => None,
            Some((_, v)) if v == "auto" => None,
            Some((_, v)) if v == "lecun" => Some(InitScheme::LecunNormal),
            Some((_, v)) if v == "uniform" => Some(InitScheme::UNIFORM_DEFAULT),
            Some((l, v)) => return Err(config_err(l, format!("bad init '{v}' (auto | lecun | uniform)"))),
        };
        if kind == ModelKind::Mlp && (model.with_bn || model.with_dropout) {
            return Err(config_err(line_of("bn").max(line_of("dropout")), "bn/dropout apply to vgg9 only"));
        }

        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: value(get("learning_rate"), "learning_rate")?.unwrap_or(defaults.learning_rate),
            batch_size: value(get("batch_size"), "batch_size")?.unwrap_or(defaults.batch_size),
            epochs: value(get("epochs"), "epochs")?.unwrap_or(defaults.epochs),
            seed: value(get("seed"), "seed")?.unwrap_or(defaults.seed),
            l2_lambda: value(get("l2"), "l2")?.unwrap_or(defaults.l2_lambda),
            l2_all_params: parse_bool(get("l2_all_params"), "l2_all_params")?.unwrap_or(false),
        };
        train.validate().map_err(|e| config_err(header_line, e.to_string()))?;

        let dataset = match get("dataset") {
            Some((line, v)) => DatasetSelector::parse(v, base).map_err(|e| config_err(*line, e))?,
            None => match kind {
                ModelKind::Mlp => DatasetSelector::Mnist,
                ModelKind::Vgg9 => DatasetSelector::SynthAudio,
            },
        };
        let repetitions: usize = value(get("repetitions"), "repetitions")?.unwrap_or(1);
        if repetitions == 0 {
            return Err(config_err(line_of("repetitions"), "repetitions must be >= 1"));
        }
        experiments.push(ExperimentSpec {
            name,
            model,
            train,
            dataset,
            repetitions,
        });
    }
    Ok(SuiteConfig {
        settings,
        experiments,
    })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SuiteConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# globals
mnist_dir = mnist
epochs = 3

[experiment]
name = a
widths = 784-16-10
activation = selu

[experiment]   # overrides
name = b
model = vgg9
activation = gelu
bn = true
dropout = yes
epochs = 5
repetitions = 2
dataset = manifest:clips.csv
";

    #[test]
    fn parses_globals_and_sections() {
        let cfg = parse_config(SAMPLE, Path::new("/base")).unwrap();
        assert_eq!(cfg.settings.mnist_dir, PathBuf::from("/base/mnist"));
        assert_eq!(cfg.experiments.len(), 2);
        let a = &cfg.experiments[0];
        assert_eq!(a.model.layer_widths, vec![784, 16, 10]);
        assert_eq!(a.model.activation, ActivationKind::SELU);
        assert_eq!(a.train.epochs, 3);
        assert_eq!(a.dataset, DatasetSelector::Mnist);
        let b = &cfg.experiments[1];
        assert_eq!(b.model.kind, ModelKind::Vgg9);
        assert!(b.model.with_bn && b.model.with_dropout);
        assert_eq!((b.train.epochs, b.repetitions), (5, 2));
        assert_eq!(b.dataset, DatasetSelector::Manifest(PathBuf::from("/base/clips.csv")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "[experiment]\nname = x\nwidths = 784-10\nactivation = swish\n";
        match parse_config(bad, Path::new(".")) {
            Err(Error::Config { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("foo = 1", Path::new(".")), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("[exp]", Path::new(".")), Err(Error::Config { line: 1, .. })));
        assert!(parse_config("[experiment]\nwidths=784-8-10\n", Path::new(".")).is_err());
    }

    #[test]
    fn empty_config_has_no_experiments() {
        assert!(parse_config("", Path::new(".")).unwrap().experiments.is_empty());
    }
}
