use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataio::spectrogram::{log_mel_spectrogram, patch_split, SpectrogramParams};
use crate::dataio::{read_wav, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

/// Reads a `path,label` CSV manifest, extracts log-mel patches from every
/// file, and returns the dataset, the class names (index = class id, sorted)
/// and the file index of each patch. Relative paths resolve against the
/// manifest's directory. Files must already be at `params.sample_rate`.
pub fn load_manifest(
    manifest: impl AsRef<Path>,
    params: &SpectrogramParams,
) -> Result<(LabeledDataset, Vec<String>, Vec<usize>)> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest)?;
    let entries = reader
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
    if entries.is_empty() {
        return Err(Error::Dataset(format!("{} lists no files", manifest.display())));
    }
    let mut names: Vec<String> = entries.iter().map(|e| e.label.clone()).collect();
    names.sort();
    names.dedup();

    let mut patches = Vec::new();
    let mut labels = Vec::new();
    let mut file_of = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        let (samples, rate) = read_wav(&path)?;
        if rate != params.sample_rate {
            return Err(Error::Dataset(format!(
                "{} is {rate} Hz but features expect {} Hz (no resampling)",
                path.display(),
                params.sample_rate
            )));
        }
        let label = names.binary_search(&e.label).expect("label collected above");
        let spec = log_mel_spectrogram(samples.data(), params)?;
        for p in patch_split(&spec, params.patch_frames)? {
            patches.push(p);
            labels.push(label);
            file_of.push(i);
        }
    }
    let classes = names.len();
    Ok((LabeledDataset::from_samples(&patches, labels, classes)?, names, file_of))
}
