//! "TDF v1" tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"TNSR" | u32 version (=1) | u32 ndim | ndim x u64 dims | f32 data, row-major
//! ```
//!
//! Values are narrowed to `f32` on write.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u32 = 1;

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> std::result::Result<&'a [u8], String> {
    if bytes.len() < n {
        return Err(format!("truncated: wanted {n} more bytes, {} left", bytes.len()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn decode_inner(mut bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let b = &mut bytes;
    if take(b, 4)? != MAGIC {
        return Err("bad magic, expected TNSR".into());
    }
    let version = u32::from_le_bytes(take(b, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let ndim = u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize;
    if ndim == 0 {
        return Err("zero-rank tensor".into());
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let d = u64::from_le_bytes(take(b, 8)?.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| format!("dimension {d} too large"))?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or("element count overflows")?;
    let raw = take(b, len.checked_mul(4).ok_or("element count overflows")?)?;
    if !b.is_empty() {
        return Err(format!("{} trailing bytes", b.len()));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    decode_inner(bytes).map_err(|msg| Error::format("<memory>", msg))
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(Error::io_at(path))?;
    decode_inner(&bytes).map_err(|msg| Error::format(path, msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.5, -2.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"TNSR");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &2u64.to_le_bytes());
        assert_eq!(&bytes[28..32], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 36);
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let t = Tensor::from_vec(vec![1.0]);
        let mut bytes = encode(&t);
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        let mut bytes = encode(&t);
        bytes[4] = 2;
        assert!(decode(&bytes).unwrap_err().to_string().contains("version"));
        let bytes = encode(&t);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_f32_exact(
            shape in proptest::collection::vec(1usize..4, 1..4),
            seed in any::<u64>(),
        ) {
            let mut rng = crate::rng::Rng::new(seed);
            let t = Tensor::uniform(&shape, -10.0, 10.0, &mut rng);
            let back = decode(&encode(&t)).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(*a, *b as f32 as f64);
            }
        }
    }
}
