//! Datasets: MNIST IDX files, WAV audio, the log-mel patch pipeline and a
//! synthetic audio corpus.

mod manifest;
mod mnist;
mod spectrogram;
mod synth;
mod wav;

pub use manifest::{load_manifest, ManifestEntry};
pub use mnist::{load_mnist_dir, load_mnist_idx, MNIST_TEST_FILES, MNIST_TRAIN_FILES};
pub use spectrogram::{
    dft_naive, fft_in_place, frame_count, hann_window, hz_to_mel, log_mel_spectrogram,
    mel_filterbank, mel_to_hz, patch_split, power_spectrum, MelFilterbank, SpectrogramParams,
    LOG_ENERGY_FLOOR,
};
pub use synth::{synth_audio_clips, synth_audio_dataset, SynthAudioConfig};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};
use crate::rng::{Rng, DATA_STREAM};
use crate::tensor::Tensor;

/// Inputs stacked along the leading axis with one integer label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.rank() < 2 {
            return Err(Error::Shape(format!(
                "dataset inputs need a leading sample axis, got {:?}",
                inputs.shape()
            )));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.rows(),
                labels: labels.len(),
            });
        }
        if class_count == 0 {
            return Err(Error::Parameter("class_count must be positive".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::Parameter(format!(
                "label {l} at sample {i} outside [0, {class_count})"
            )));
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            class_count,
        })
    }

    /// Stacks equally shaped samples.
    pub fn from_samples(samples: &[Tensor], labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Dataset("no samples".into()))?;
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(samples.len() * first.len());
        for s in samples {
            if s.shape() != first.shape() {
                return Err(Error::dimension("from_samples", s.shape(), first.shape()));
            }
            data.extend_from_slice(s.data());
        }
        Self::new(Tensor::new(&shape, data)?, labels, class_count)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: a dataset holds at least one sample.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.inputs.row_len()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    /// Inputs and one-hot targets for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let x = self.inputs.select_rows(indices)?;
        let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, one_hot(&labels, self.class_count)?))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let inputs = self.inputs.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(LabeledDataset {
            inputs,
            labels,
            class_count: self.class_count,
        })
    }

    pub fn map_inputs(&self, f: impl Fn(&mut [f64])) -> Self {
        let mut out = self.clone();
        for i in 0..out.len() {
            f(out.inputs.row_mut(i));
        }
        out
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Parameter(format!("label {l} outside [0, {classes})")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), classes], data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub eval: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 5.0 / 6.0,
            eval: 1.0 / 12.0,
            test: 1.0 / 12.0,
        }
    }
}

/// Shuffles `0..n` with the seed and cuts it into train/eval/test index
/// lists of `round(n·f)` items each (test takes the remainder).
pub fn split_indices(n: usize, fractions: SplitFractions, seed: u64) -> Result<[Vec<usize>; 3]> {
    let SplitFractions { train, eval, test } = fractions;
    if [train, eval, test].iter().any(|f| !(*f >= 0.0)) || ((train + eval + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split fractions must be non-negative and sum to 1, got {train}+{eval}+{test}"
        )));
    }
    let n_train = (n as f64 * train).round() as usize;
    let n_eval = ((n as f64 * eval).round() as usize).min(n - n_train.min(n));
    if n < 3 || n_train == 0 || n_eval == 0 || n_train + n_eval >= n {
        return Err(Error::Parameter(format!(
            "cannot split {n} items into three non-empty parts with {fractions:?}"
        )));
    }
    let order = Rng::stream(seed, DATA_STREAM).permutation(n);
    Ok([
        order[..n_train].to_vec(),
        order[n_train..n_train + n_eval].to_vec(),
        order[n_train + n_eval..].to_vec(),
    ])
}

/// As [`split_indices`] but over group ids (e.g. the clip each patch came
/// from), so that all items of a group land in the same subset.
pub fn split_by_group(groups: &[usize], fractions: SplitFractions, seed: u64) -> Result<[Vec<usize>; 3]> {
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let parts = split_indices(ids.len(), fractions, seed)?;
    Ok(parts.map(|part| {
        let mut chosen: Vec<usize> = part.iter().map(|&p| ids[p]).collect();
        chosen.sort_unstable();
        (0..groups.len())
            .filter(|&i| chosen.binary_search(&groups[i]).is_ok())
            .collect()
    }))
}

pub fn three_way_split(
    dataset: &LabeledDataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let [a, b, c] = split_indices(dataset.len(), fractions, seed)?;
    Ok((dataset.subset(&a)?, dataset.subset(&b)?, dataset.subset(&c)?))
}

/// Per-feature affine standardization fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    /// Zero marks a constant feature, which maps to 0.
    inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(set: &LabeledDataset) -> Self {
        let d = set.sample_len();
        let n = set.len() as f64;
        let mut mean = vec![0.0; d];
        for i in 0..set.len() {
            for (m, v) in mean.iter_mut().zip(set.sample(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..set.len() {
            for ((s, v), m) in var.iter_mut().zip(set.sample(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * (1.0 + sd) && sd > 0.0 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();
        Standardizer { mean, inv_std }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn apply(&self, set: &LabeledDataset) -> Result<LabeledDataset> {
        if set.sample_len() != self.mean.len() {
            return Err(Error::dimension("standardize", &[set.sample_len()], &[self.mean.len()]));
        }
        Ok(set.map_inputs(|row| {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }))
    }
}

/// Fits on `train` and applies the same statistics to every set given.
pub fn standardize(
    train: &LabeledDataset,
    others: &[&LabeledDataset],
) -> Result<(LabeledDataset, Vec<LabeledDataset>)> {
    let s = Standardizer::fit(train);
    let rest = others.iter().map(|o| s.apply(o)).collect::<Result<Vec<_>>>()?;
    Ok((s.apply(train)?, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting(n: usize) -> LabeledDataset {
        let x = Tensor::new(&[n, 2], (0..2 * n).map(|v| v as f64).collect()).unwrap();
        LabeledDataset::new(x, (0..n).map(|i| i % 3).collect(), 3).unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_counts() {
        let x = Tensor::zeros(&[2, 2]).unwrap();
        assert!(LabeledDataset::new(x.clone(), vec![0, 3], 3).is_err());
        assert!(matches!(
            LabeledDataset::new(x, vec![0], 3),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn default_split_sizes() {
        let [a, b, c] = split_indices(60_000, SplitFractions::default(), 0).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (50_000, 5_000, 5_000));
    }

    #[test]
    fn split_is_seeded_partition() {
        let d = counting(30);
        let (a, b, c) = three_way_split(&d, SplitFractions::default(), 7).unwrap();
        let (a2, ..) = three_way_split(&d, SplitFractions::default(), 7).unwrap();
        assert_eq!(a, a2);
        let mut all: Vec<f64> = [&a, &b, &c]
            .iter()
            .flat_map(|s| (0..s.len()).map(|i| s.sample(i)[0]).collect::<Vec<_>>())
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..30).map(|v| (2 * v) as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_fractions_must_sum_to_one() {
        let f = SplitFractions { train: 0.5, eval: 0.2, test: 0.2 };
        assert!(split_indices(100, f, 0).is_err());
    }

    #[test]
    fn standardizer_zeroes_constant_features() {
        let x = Tensor::new(&[4, 2], vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0]).unwrap();
        let d = LabeledDataset::new(x, vec![0; 4], 1).unwrap();
        let (s, _) = standardize(&d, &[]).unwrap();
        let col0: Vec<f64> = (0..4).map(|i| s.sample(i)[0]).collect();
        let mean = col0.iter().sum::<f64>() / 4.0;
        let var = col0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        assert!((0..4).all(|i| s.sample(i)[1] == 0.0));
    }
}
