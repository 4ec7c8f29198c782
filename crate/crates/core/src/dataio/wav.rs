use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads integer PCM audio scaled to `[-1, 1]`; multi-channel input is
/// averaged to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Tensor, u32)> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample > 32 {
        return Err(Error::Format {
            what: "wav",
            reason: format!(
                "{}: only integer PCM is supported, got {:?} {}-bit",
                path.display(),
                spec.sample_format,
                spec.bits_per_sample
            ),
        });
    }
    let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
    let channels = spec.channels.max(1) as usize;
    let raw = reader
        .samples::<i32>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err(path))?;
    let mono: Vec<f64> = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 * scale).sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(Error::TooShort {
            samples: 0,
            needed: 1,
        });
    }
    Ok((Tensor::from_vec(mono)?, spec.sample_rate))
}

/// Writes mono 16-bit PCM, clipping to `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(wav_err(path))?;
    }
    w.finalize().map_err(wav_err(path))?;
    Ok(())
}
