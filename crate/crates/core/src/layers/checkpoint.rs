//! Flat binary container for a list of tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  b"ACTNETCK"
//! version  u32      1
//! count    u32      number of tensors
//! per tensor:
//!   rank   u32
//!   dims   rank × u64
//!   data   product(dims) × f64, row-major
//! ```
//!
//! Used for model checkpoints and for cached feature patches.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ACTNETCK";
pub const VERSION: u32 = 1;

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let payload: usize = tensors
        .iter()
        .map(|t| 4 + 8 * t.rank() + 8 * t.len())
        .sum();
    let mut out = Vec::with_capacity(16 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                what: "checkpoint",
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(Error::Format {
            what: "checkpoint",
            reason: "missing ACTNETCK magic".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format {
            what: "checkpoint",
            reason: format!("unsupported version {version}"),
        });
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format {
                what: "checkpoint",
                reason: "dimension exceeds address space".into(),
            })?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format {
                what: "checkpoint",
                reason: format!("shape {shape:?} overflows"),
            })?;
        let raw = r.take(n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            what: "checkpoint",
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(tensors)
}

pub fn save(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    fs::write(path, encode(tensors))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[1, 2], vec![1.5, -2.0]).unwrap();
        let bytes = encode(&[t]);
        assert_eq!(&bytes[..8], b"ACTNETCK");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..28], &1u64.to_le_bytes());
        assert_eq!(&bytes[28..36], &2u64.to_le_bytes());
        assert_eq!(&bytes[36..44], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 52);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&[Tensor::zeros(&[3]).unwrap()]);
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { .. })));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..4), 0..5), seed in any::<u64>()) {
            let mut rng = crate::rng::Rng::new(seed);
            let tensors: Vec<Tensor> = shapes
                .iter()
                .map(|s| {
                    let n = s.iter().product();
                    Tensor::new(s, (0..n).map(|_| rng.standard_normal() * 1e3).collect()).unwrap()
                })
                .collect();
            let back = decode(&encode(&tensors)).unwrap();
            prop_assert_eq!(back, tensors);
        }
    }
}
