use std::fs;
use std::path::Path;

use actnet::dataio::{
    load_manifest, load_mnist_idx, log_mel_spectrogram, patch_split, read_wav, split_by_group, split_indices,
    standardize, synth_audio_clips, synth_audio_dataset, three_way_split, write_wav, LabeledDataset,
    SpectrogramParams, SplitFractions, SynthAudioConfig, LOG_ENERGY_FLOOR,
};
use actnet::rng::Rng;
use actnet::{Error, Tensor};
use hound::{SampleFormat, WavSpec, WavWriter};
use proptest::prelude::*;

fn write_i16(path: &Path, rate: u32, channels: u16, samples: &[i16]) {
    let spec = WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn one_second_file_has_one_second_of_samples() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tone.wav");
    let tone: Vec<i16> = (0..44100).map(|i| ((i as f64 * 0.05).sin() * 8000.0) as i16).collect();
    write_i16(&p, 44100, 1, &tone);
    let (x, rate) = read_wav(&p).unwrap();
    assert_eq!(rate, 44100);
    assert_eq!(x.len(), 44100);
}

#[test]
fn silence_reads_as_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("silence.wav");
    write_i16(&p, 22050, 1, &[0; 4000]);
    let (x, _) = read_wav(&p).unwrap();
    assert!(x.data().iter().all(|&v| v == 0.0));
}

#[test]
fn full_scale_square_wave_uses_16_bit_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("square.wav");
    let square: Vec<i16> = (0..1000).map(|i| if (i / 50) % 2 == 0 { i16::MAX } else { i16::MIN }).collect();
    write_i16(&p, 8000, 1, &square);
    let (x, _) = read_wav(&p).unwrap();
    for (v, s) in x.data().iter().zip(&square) {
        let want = if *s > 0 { 32767.0 / 32768.0 } else { -1.0 };
        assert_eq!(*v, want);
    }
}

#[test]
fn stereo_is_averaged_to_mono() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("stereo.wav");
    write_i16(&p, 8000, 2, &[16384, 0, -16384, -16384, 8192, 24576]);
    let (x, _) = read_wav(&p).unwrap();
    assert_eq!(x.data(), &[0.25, -0.5, 0.5]);
}

#[test]
fn float_and_garbage_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("float.wav");
    let spec = WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(&p, spec).unwrap();
    w.write_sample(0.5f32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(read_wav(&p), Err(Error::Format { .. })));
    let junk = dir.path().join("junk.wav");
    fs::write(&junk, b"RIFF not really").unwrap();
    assert!(matches!(read_wav(&junk), Err(Error::Wav { .. })));
}

#[test]
fn write_then_read_round_trips_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rt.wav");
    let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin() * 0.9).collect();
    write_wav(&p, &x, 16000).unwrap();
    let (y, rate) = read_wav(&p).unwrap();
    assert_eq!(rate, 16000);
    for (a, b) in x.iter().zip(y.data()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn silence_spectrogram_sits_on_the_floor() {
    let params = SpectrogramParams::table3(22050);
    let spec = log_mel_spectrogram(&vec![0.0; 5000], &params).unwrap();
    assert!(spec.data().iter().all(|&v| v == LOG_ENERGY_FLOOR.ln()));
    assert!(matches!(log_mel_spectrogram(&[0.0; 100], &params), Err(Error::TooShort { .. })));
}

#[test]
fn patch_split_counts_and_contents() {
    let mut rng = Rng::new(0);
    let spec = Tensor::new(&[300, 128], (0..300 * 128).map(|_| rng.uniform()).collect()).unwrap();
    let patches = patch_split(&spec, 128).unwrap();
    assert_eq!(patches.len(), 2);
    // mel × time × 1: patch[m][t] == spec[t][m]
    let p1 = &patches[1];
    for t in [0, 17, 127] {
        for m in [0, 64, 127] {
            assert_eq!(p1.data()[m * 128 + t], spec.data()[(128 + t) * 128 + m]);
        }
    }
    let exact = Tensor::new(&[128, 128], spec.data()[..128 * 128].to_vec()).unwrap();
    assert_eq!(patch_split(&exact, 128).unwrap().len(), 1);
    let short = Tensor::zeros(&[127, 128]).unwrap();
    assert!(patch_split(&short, 128).is_err());
}

#[test]
fn same_wav_bytes_give_identical_patches() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    let clips = synth_audio_clips(&SynthAudioConfig::one_patch_clips(1, 1), 3).unwrap();
    write_wav(&p, &clips[0].0, 22050).unwrap();
    let params = SpectrogramParams::table3(22050);
    let run = || {
        let (x, _) = read_wav(&p).unwrap();
        patch_split(&log_mel_spectrogram(x.data(), &params).unwrap(), 128).unwrap()
    };
    assert_eq!(run(), run());
}

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [0x0803, n, rows, cols] {
        b.extend_from_slice(&u32::to_be_bytes(v));
    }
    b.extend_from_slice(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [0x0801, labels.len() as u32] {
        b.extend_from_slice(&u32::to_be_bytes(v));
    }
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_fixtures_load_and_fail_distinctly() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lbl) = (dir.path().join("img"), dir.path().join("lbl"));
    let mut pixels = vec![0u8; 784];
    pixels.extend((0..784).map(|i| (i % 256) as u8));
    fs::write(&img, idx_images(2, 28, 28, &pixels)).unwrap();
    fs::write(&lbl, idx_labels(&[3, 7])).unwrap();
    let set = load_mnist_idx(&img, &lbl).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.sample_len(), 784);
    assert!(set.sample(0).iter().all(|&v| v == 0.0));
    assert_eq!(set.sample(1)[255], 1.0);
    assert_eq!(set.sample(1)[51], 51.0 / 255.0);
    assert_eq!(set.labels(), &[3, 7]);

    let mut bad = idx_images(2, 28, 28, &pixels);
    bad[3] = 0x01;
    fs::write(&img, &bad).unwrap();
    assert!(matches!(load_mnist_idx(&img, &lbl), Err(Error::BadMagic { .. })));

    fs::write(&img, &idx_images(2, 28, 28, &pixels)[..1000]).unwrap();
    assert!(matches!(load_mnist_idx(&img, &lbl), Err(Error::Truncated { .. })));

    fs::write(&img, idx_images(2, 28, 28, &pixels)).unwrap();
    fs::write(&lbl, idx_labels(&[3, 7, 1])).unwrap();
    assert!(matches!(load_mnist_idx(&img, &lbl), Err(Error::CountMismatch { images: 2, labels: 3 })));
}

fn toy_set(n: usize) -> LabeledDataset {
    let x = Tensor::new(&[n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
    LabeledDataset::new(x, (0..n).map(|i| i % 3).collect(), 3).unwrap()
}

#[test]
fn default_fractions_split_sixty_thousand_into_50k_5k_5k() {
    let [a, b, c] = split_indices(60_000, SplitFractions::default(), 0).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (50_000, 5_000, 5_000));
    let bad = SplitFractions {
        train: 0.5,
        eval: 0.3,
        test: 0.3,
    };
    assert!(split_indices(10, bad, 0).is_err());
}

#[test]
fn three_way_split_is_a_seeded_partition() {
    let set = toy_set(101);
    let (a, b, c) = three_way_split(&set, SplitFractions::default(), 5).unwrap();
    let (a2, _, _) = three_way_split(&set, SplitFractions::default(), 5).unwrap();
    assert_eq!(a.inputs(), a2.inputs());
    let mut all: Vec<f64> = [&a, &b, &c].iter().flat_map(|s| s.inputs().data().to_vec()).collect();
    all.sort_by(f64::total_cmp);
    assert_eq!(all, (0..101).map(|i| i as f64).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn splits_are_disjoint_and_exhaustive(n in 3usize..2000, seed in any::<u64>(), t in 0.1f64..0.8) {
        let e = (1.0 - t) / 2.0;
        let f = SplitFractions { train: t, eval: e, test: 1.0 - t - e };
        let parts = split_indices(n, f, seed).unwrap();
        let mut seen = vec![false; n];
        for part in &parts {
            for &i in part {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn group_split_never_separates_a_group(groups in prop::collection::vec(0usize..40, 3..300), seed in any::<u64>()) {
        let distinct = { let mut g = groups.clone(); g.sort(); g.dedup(); g.len() };
        prop_assume!(distinct >= 10);
        let f = SplitFractions { train: 0.6, eval: 0.2, test: 0.2 };
        let parts = split_by_group(&groups, f, seed).unwrap();
        let mut owner = std::collections::HashMap::new();
        for (k, part) in parts.iter().enumerate() {
            for &i in part {
                prop_assert_eq!(*owner.entry(groups[i]).or_insert(k), k);
            }
        }
        prop_assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), groups.len());
    }
}

#[test]
fn standardize_uses_training_statistics() {
    let mut rng = Rng::new(3);
    let n = 200;
    let mut data = Vec::new();
    for _ in 0..n {
        data.extend([5.0 + 2.0 * rng.standard_normal(), 7.0, -3.0 + 0.1 * rng.standard_normal()]);
    }
    let train = LabeledDataset::new(Tensor::new(&[n, 3], data).unwrap(), vec![0; n], 1).unwrap();
    let other = LabeledDataset::new(Tensor::new(&[1, 3], vec![5.0, 7.0, -3.0]).unwrap(), vec![0], 1).unwrap();
    let (t, rest) = standardize(&train, &[&other]).unwrap();
    for f in [0, 2] {
        let col: Vec<f64> = (0..n).map(|i| t.sample(i)[f]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9, "feature {f}: {mean} {var}");
    }
    assert!((0..n).all(|i| t.sample(i)[1] == 0.0), "constant feature maps to 0");
    assert_eq!(rest[0].sample(0)[1], 0.0);

    // standardizing standardized data changes nothing
    let (again, _) = standardize(&t, &[]).unwrap();
    assert!(again.inputs().max_abs_diff(t.inputs()).unwrap() < 1e-9);
}

#[test]
fn synthetic_corpus_is_deterministic() {
    let cfg = SynthAudioConfig::one_patch_clips(3, 2);
    let (a, ca) = synth_audio_dataset(&cfg, 11).unwrap();
    let (b, cb) = synth_audio_dataset(&cfg, 11).unwrap();
    let bits = |s: &LabeledDataset| s.inputs().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!((a.labels(), ca), (b.labels(), cb));
    let (c, _) = synth_audio_dataset(&cfg, 12).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn ten_second_clips_give_thirteen_patches_each_at_44k() {
    let mut cfg = SynthAudioConfig::one_patch_clips(10, 5);
    cfg.params = SpectrogramParams::table3(44_100);
    let cfg = cfg.with_clip_seconds(10.0);
    let (set, clip_of) = synth_audio_dataset(&cfg, 0).unwrap();
    assert_eq!(set.len(), 10 * 5 * 13);
    assert_eq!(set.len(), 650);
    assert_eq!(set.sample_shape(), &[128, 128, 1]);
    for clip in 0..50 {
        assert_eq!(clip_of.iter().filter(|&&c| c == clip).count(), 13);
    }
}

#[test]
fn class_recipes_have_distinct_mel_centroids() {
    let cfg = SynthAudioConfig::one_patch_clips(10, 3);
    let (set, _) = synth_audio_dataset(&cfg, 0).unwrap();
    let mut centroid = [0.0; 10];
    let mut count = vec![0usize; 10];
    for i in 0..set.len() {
        // patches are mel × time; sum energy over time per band
        let p = set.sample(i);
        let (mut num, mut den) = (0.0, 0.0);
        for m in 0..128 {
            let e: f64 = p[m * 128..(m + 1) * 128].iter().map(|v| v.exp()).sum();
            num += m as f64 * e;
            den += e;
        }
        centroid[set.labels()[i]] += num / den;
        count[set.labels()[i]] += 1;
    }
    let c: Vec<f64> = centroid.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
    let mut gap = f64::INFINITY;
    for i in 0..10 {
        for j in i + 1..10 {
            gap = gap.min((c[i] - c[j]).abs());
        }
    }
    assert!(gap > 0.0, "centroids {c:?}");
}

#[test]
fn manifest_maps_sorted_labels_and_tracks_files() {
    let dir = tempfile::tempdir().unwrap();
    let clips = synth_audio_clips(&SynthAudioConfig::one_patch_clips(2, 2).with_clip_seconds(2.0), 1).unwrap();
    let mut csv = String::from("path,label\n");
    let names = ["park", "airport"];
    for (i, (samples, class)) in clips.iter().enumerate() {
        let f = format!("clip{i}.wav");
        write_wav(dir.path().join(&f), samples, 22050).unwrap();
        csv.push_str(&format!("{f},{}\n", names[*class]));
    }
    let manifest = dir.path().join("manifest.csv");
    fs::write(&manifest, csv).unwrap();
    let params = SpectrogramParams::table3(22050);
    let (set, classes, file_of) = load_manifest(&manifest, &params).unwrap();
    assert_eq!(classes, vec!["airport".to_string(), "park".to_string()]);
    // 2 s at 22050 Hz: 169 frames, one patch per file
    assert_eq!(set.len(), 4);
    assert_eq!(file_of, vec![0, 1, 2, 3]);
    assert_eq!(set.labels(), &[1, 1, 0, 0]);

    let wrong_rate = SpectrogramParams::table3(44100);
    assert!(matches!(load_manifest(&manifest, &wrong_rate), Err(Error::Dataset(_))));
    fs::write(&manifest, "path,label\n").unwrap();
    assert!(load_manifest(&manifest, &params).is_err());
}
