//! Deterministic synthetic acoustic-scene corpus: each class is a timbre
//! recipe (harmonic stack, resonant noise band, amplitude modulation), and
//! every clip jitters the recipe with its own random draws.

use std::f64::consts::PI;

use crate::dataio::spectrogram::{log_mel_spectrogram, patch_split, SpectrogramParams};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{Rng, DATA_STREAM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthAudioConfig {
    pub classes: usize,
    pub per_class: usize,
    pub clip_samples: usize,
    pub params: SpectrogramParams,
}

impl SynthAudioConfig {
    /// Clips exactly one patch long at 22050 Hz with the Table 3 parameters.
    pub fn one_patch_clips(classes: usize, per_class: usize) -> Self {
        let params = SpectrogramParams::table3(22_050);
        SynthAudioConfig {
            classes,
            per_class,
            clip_samples: params.samples_for_patches(1),
            params,
        }
    }

    pub fn with_clip_seconds(mut self, seconds: f64) -> Self {
        self.clip_samples = (seconds * self.params.sample_rate as f64).round() as usize;
        self
    }
}

struct Recipe {
    f0: f64,
    harmonics: usize,
    decay: f64,
    noise_hz: f64,
    am_hz: f64,
}

fn recipe(class: usize) -> Recipe {
    let c = class as f64;
    Recipe {
        f0: 80.0 * 2f64.powf(0.55 * c),
        harmonics: 2 + (class * 3) % 7,
        decay: 0.5 + 0.15 * (class % 4) as f64,
        noise_hz: 300.0 + 700.0 * ((class * 3) % 10) as f64,
        am_hz: 1.0 + 2.0 * (class % 5) as f64,
    }
}

fn render(r: &Recipe, n: usize, sr: f64, rng: &mut Rng) -> Vec<f64> {
    let f0 = r.f0 * (1.0 + 0.03 * rng.standard_normal());
    let gain = rng.uniform_range(0.3, 0.8);
    let noise_level = rng.uniform_range(0.05, 0.15);
    let am_phase = rng.uniform_range(0.0, 2.0 * PI);
    let phases: Vec<f64> = (0..r.harmonics).map(|_| rng.uniform_range(0.0, 2.0 * PI)).collect();
    let norm: f64 = (1..=r.harmonics).map(|h| (h as f64).powf(-r.decay)).sum();

    // Two-pole resonator around the class noise band.
    let bw = 200.0;
    let rad = (-PI * bw / sr).exp();
    let theta = 2.0 * PI * r.noise_hz.min(sr / 2.0 - bw) / sr;
    let (a1, a2) = (2.0 * rad * theta.cos(), -rad * rad);
    let resonator_gain = 1.0 - rad;
    let (mut y1, mut y2) = (0.0, 0.0);

    (0..n)
        .map(|t| {
            let time = t as f64 / sr;
            let mut tone = 0.0;
            for (h, ph) in phases.iter().enumerate() {
                let k = (h + 1) as f64;
                if k * f0 < sr / 2.0 {
                    tone += k.powf(-r.decay) * (2.0 * PI * k * f0 * time + ph).sin();
                }
            }
            let am = 0.75 + 0.25 * (2.0 * PI * r.am_hz * time + am_phase).sin();
            let y = resonator_gain * rng.standard_normal() + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            (gain * am * tone / norm + noise_level * y + 0.01 * rng.standard_normal()).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Raw clips in class-major order, with labels.
pub fn synth_audio_clips(cfg: &SynthAudioConfig, seed: u64) -> Result<Vec<(Vec<f64>, usize)>> {
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.clip_samples == 0 {
        return Err(Error::Parameter(format!("synthetic corpus needs classes, clips and samples > 0: {cfg:?}")));
    }
    let sr = cfg.params.sample_rate as f64;
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for class in 0..cfg.classes {
        let r = recipe(class);
        for clip in 0..cfg.per_class {
            let id = (class * cfg.per_class + clip) as u64;
            let mut rng = Rng::stream(seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15), DATA_STREAM);
            out.push((render(&r, cfg.clip_samples, sr, &mut rng), class));
        }
    }
    Ok(out)
}

/// Log-mel patches of every clip, plus the clip index of each patch so
/// callers can split by clip.
pub fn synth_audio_dataset(cfg: &SynthAudioConfig, seed: u64) -> Result<(LabeledDataset, Vec<usize>)> {
    let clips = synth_audio_clips(cfg, seed)?;
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    let mut clip_of = Vec::new();
    for (i, (samples, label)) in clips.iter().enumerate() {
        let spec = log_mel_spectrogram(samples, &cfg.params)?;
        for p in patch_split(&spec, cfg.params.patch_frames)? {
            patches.push(p);
            labels.push(*label);
            clip_of.push(i);
        }
    }
    Ok((LabeledDataset::from_samples(&patches, labels, cfg.classes)?, clip_of))
}
