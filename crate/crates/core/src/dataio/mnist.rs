use std::fs;
use std::path::Path;

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

pub const MNIST_TRAIN_FILES: (&str, &str) = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
pub const MNIST_TEST_FILES: (&str, &str) = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Truncated {
            what,
            expected: at + 4,
            found: bytes.len(),
        })
}

fn parse_images(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    const WHAT: &str = "IDX image file";
    let magic = be_u32(bytes, 0, WHAT)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, WHAT)? as usize;
    let rows = be_u32(bytes, 8, WHAT)? as usize;
    let cols = be_u32(bytes, 12, WHAT)? as usize;
    let pixels = rows * cols;
    if pixels == 0 {
        return Err(Error::Format {
            what: WHAT,
            reason: format!("zero-sized images {rows}x{cols}"),
        });
    }
    let need = 16 + n * pixels;
    if bytes.len() < need {
        return Err(Error::Truncated {
            what: WHAT,
            expected: need,
            found: bytes.len(),
        });
    }
    Ok((n, pixels, &bytes[16..need]))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    const WHAT: &str = "IDX label file";
    let magic = be_u32(bytes, 0, WHAT)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, WHAT)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(Error::Truncated {
            what: WHAT,
            expected: need,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..need])
}

/// Reads an IDX image/label pair; pixels are scaled to `[0, 1]` and each
/// image is flattened row-major.
pub fn load_mnist_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let image_bytes = fs::read(image_path)?;
    let label_bytes = fs::read(label_path)?;
    let (n, pixels, raw) = parse_images(&image_bytes)?;
    let labels = parse_labels(&label_bytes)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::Dataset("IDX files hold no samples".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Format {
            what: "IDX label file",
            reason: format!("label {l} outside 0..=9"),
        });
    }
    let data = raw.iter().map(|&b| b as f64 / 255.0).collect();
    LabeledDataset::new(
        Tensor::new(&[n, pixels], data)?,
        labels.iter().map(|&l| l as usize).collect(),
        10,
    )
}

/// Loads `(train, test)` from a directory holding the four standard files.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    for f in [MNIST_TRAIN_FILES.0, MNIST_TRAIN_FILES.1, MNIST_TEST_FILES.0, MNIST_TEST_FILES.1] {
        if !dir.join(f).is_file() {
            return Err(Error::Dataset(format!("missing {}", dir.join(f).display())));
        }
    }
    let train = load_mnist_idx(dir.join(MNIST_TRAIN_FILES.0), dir.join(MNIST_TRAIN_FILES.1))?;
    let test = load_mnist_idx(dir.join(MNIST_TEST_FILES.0), dir.join(MNIST_TEST_FILES.1))?;
    Ok((train, test))
}
