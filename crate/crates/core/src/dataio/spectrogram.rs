//! Short-time power spectrum, HTK mel filterbank and log-mel patches.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Added to mel energies before the natural log.
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramParams {
    pub fft_size: usize,
    pub hop: usize,
    /// Hann window length; frames are zero-padded to `fft_size`.
    pub window: usize,
    pub mel_bins: usize,
    /// Frames per patch.
    pub patch_frames: usize,
    pub sample_rate: u32,
}

impl SpectrogramParams {
    pub fn table3(sample_rate: u32) -> Self {
        SpectrogramParams {
            fft_size: 2048,
            hop: 256,
            window: 1024,
            mel_bins: 128,
            patch_frames: 128,
            sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if !p.fft_size.is_power_of_two() || p.fft_size < 2 {
            return Err(Error::Parameter(format!("fft_size {} is not a power of two", p.fft_size)));
        }
        if p.window == 0 || p.window > p.fft_size || p.hop == 0 || p.hop > p.window {
            return Err(Error::Parameter(format!(
                "need 0 < hop <= window <= fft_size, got hop {} window {} fft {}",
                p.hop, p.window, p.fft_size
            )));
        }
        if p.mel_bins == 0 || p.mel_bins > p.fft_size / 2 || p.patch_frames == 0 || p.sample_rate == 0 {
            return Err(Error::Parameter(format!("invalid spectrogram params {p:?}")));
        }
        Ok(())
    }

    /// Samples covering exactly `patches` patches.
    pub fn samples_for_patches(&self, patches: usize) -> usize {
        self.window + (patches * self.patch_frames - 1) * self.hop
    }
}

/// Frames with no centering or padding: `1 + (n − window) / hop`.
pub fn frame_count(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window {
        0
    } else {
        1 + (samples - window) / hop
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// In-place iterative radix-2 FFT, `X[k] = Σ x[t]·e^{−2πikt/N}`.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    let n = re.len();
    if n != im.len() {
        return Err(Error::dimension("fft", &[n], &[im.len()]));
    }
    if !n.is_power_of_two() {
        return Err(Error::Parameter(format!("fft length {n} is not a power of two")));
    }
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<(f64, f64)> = (0..half)
            .map(|k| {
                let a = ang * k as f64;
                (a.cos(), a.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for (k, &(wr, wi)) in twiddles.iter().enumerate() {
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Direct `O(n²)` DFT of a real frame, returning `(re, im)`.
pub fn dft_naive(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(r, i), (t, &v)| {
                let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                (r + v * a.cos(), i + v * a.sin())
            })
        })
        .unzip()
}

/// `|X[k]|²` for `k = 0..=fft_size/2` of a frame zero-padded to `fft_size`.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    if frame.len() > fft_size {
        return Err(Error::Parameter(format!(
            "frame of {} samples exceeds fft size {fft_size}",
            frame.len()
        )));
    }
    let mut re = vec![0.0; fft_size];
    re[..frame.len()].copy_from_slice(frame);
    let mut im = vec![0.0; fft_size];
    fft_in_place(&mut re, &mut im)?;
    Ok((0..=fft_size / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with peaks evenly spaced in mel between 0 Hz and
/// Nyquist; `weights` is `mel_bins × (fft_size/2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Tensor,
    /// `mel_bins + 2` band edges in Hz; filter `m` peaks at `edges[m + 1]`.
    pub edges_hz: Vec<f64>,
    /// Non-zero bin range of each filter.
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 1]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        let w = &self.weights;
        self.support
            .iter()
            .enumerate()
            .map(|(m, &(lo, hi))| {
                w.row(m)[lo..hi].iter().zip(&power[lo..hi]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

pub fn mel_filterbank(params: &SpectrogramParams) -> Result<MelFilterbank> {
    params.validate()?;
    let nyquist = params.sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let m = params.mel_bins;
    let edges_hz: Vec<f64> = (0..m + 2)
        .map(|i| mel_to_hz(top * i as f64 / (m + 1) as f64))
        .collect();
    let bins = params.fft_size / 2 + 1;
    let bin_hz = params.sample_rate as f64 / params.fft_size as f64;
    let mut w = vec![0.0; m * bins];
    let mut support = Vec::with_capacity(m);
    for band in 0..m {
        let (lo, mid, hi) = (edges_hz[band], edges_hz[band + 1], edges_hz[band + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let v = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            w[band * bins + k] = v;
        }
        let row = &w[band * bins..(band + 1) * bins];
        let first = row.iter().position(|&v| v != 0.0);
        let last = row.iter().rposition(|&v| v != 0.0);
        if let (Some(first), Some(last)) = (first, last) {
            support.push((first, last + 1));
        } else {
            return Err(Error::Parameter(format!(
                "mel band {band} ({lo:.1}-{hi:.1} Hz) contains no FFT bin; use fewer mel bins or a larger FFT"
            )));
        }
    }
    Ok(MelFilterbank {
        weights: Tensor::new(&[m, bins], w)?,
        edges_hz,
        support,
    })
}

/// `frames × mel_bins` log-mel energies `ln(E + 1e-10)`.
pub fn log_mel_spectrogram(samples: &[f64], params: &SpectrogramParams) -> Result<Tensor> {
    let bank = mel_filterbank(params)?;
    let frames = frame_count(samples.len(), params.window, params.hop);
    if frames == 0 {
        return Err(Error::TooShort {
            samples: samples.len(),
            needed: params.window,
        });
    }
    let hann = hann_window(params.window);
    let mut out = Vec::with_capacity(frames * params.mel_bins);
    let mut frame = vec![0.0; params.window];
    for t in 0..frames {
        let s = &samples[t * params.hop..t * params.hop + params.window];
        for ((f, x), h) in frame.iter_mut().zip(s).zip(&hann) {
            *f = x * h;
        }
        let power = power_spectrum(&frame, params.fft_size)?;
        out.extend(bank.apply(&power).into_iter().map(|e| (e + LOG_ENERGY_FLOOR).ln()));
    }
    Tensor::new(&[frames, params.mel_bins], out)
}

/// Non-overlapping `patch_frames`-frame windows, each transposed to
/// `mel × time × 1`; a trailing remainder is dropped.
pub fn patch_split(spec: &Tensor, patch_frames: usize) -> Result<Vec<Tensor>> {
    if spec.rank() != 2 || patch_frames == 0 {
        return Err(Error::Shape(format!("expected frames×mel spectrogram, got {:?}", spec.shape())));
    }
    let (frames, mel) = (spec.shape()[0], spec.shape()[1]);
    if frames < patch_frames {
        return Err(Error::TooShort {
            samples: frames,
            needed: patch_frames,
        });
    }
    (0..frames / patch_frames)
        .map(|p| {
            let mut data = vec![0.0; mel * patch_frames];
            for t in 0..patch_frames {
                for (m, &v) in spec.row(p * patch_frames + t).iter().enumerate() {
                    data[m * patch_frames + t] = v;
                }
            }
            Tensor::new(&[mel, patch_frames, 1], data)
        })
        .collect()
}
