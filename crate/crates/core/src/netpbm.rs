//! Binary PPM (P6) and PGM (P5) images, maxval 255.
//!
//! Pixels are stored as `[H, W, C]` tensors in `[0, 1]`; bytes are scaled by
//! 1/255 on read and rounded on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(magic: &str, img: &Tensor, channels: usize) -> Result<Vec<u8>> {
    let (h, w) = match (img.shape(), channels) {
        ([h, w, c], _) if *c == channels => (*h, *w),
        ([h, w], 1) => (*h, *w),
        (s, _) => {
            return Err(Error::shape(format!(
                "{magic} needs {channels} channel(s), got shape {s:?}"
            )))
        }
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn write_ppm(path: &Path, img: &Tensor) -> Result<()> {
    fs::write(path, encode("P6", img, 3)?)?;
    Ok(())
}

/// Writes an `[H, W]` (or `[H, W, 1]`) map as a greyscale PGM.
pub fn write_pgm(path: &Path, map: &Tensor) -> Result<()> {
    fs::write(path, encode("P5", map, 1)?)?;
    Ok(())
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 {
        return Err("file too short".into());
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("malformed header: expected a number".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "malformed header: number too large".to_string())?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("malformed header: missing separator before pixel data".into()),
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_start: pos,
    })
}

fn decode(bytes: &[u8], magic: &[u8; 2], channels: usize) -> std::result::Result<Tensor, String> {
    let h = parse_header(bytes)?;
    if &h.magic != magic {
        return Err(format!(
            "expected magic {}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&h.magic)
        ));
    }
    if h.maxval != 255 {
        return Err(format!("unsupported maxval {} (only 255)", h.maxval));
    }
    if h.width == 0 || h.height == 0 {
        return Err("zero image dimension".into());
    }
    let n = h.width * h.height * channels;
    let data = &bytes[h.data_start..];
    if data.len() < n {
        return Err(format!("truncated pixel data: {} of {n} bytes", data.len()));
    }
    let px = data[..n].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![h.height, h.width, channels], px).map_err(|e| e.to_string())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    decode(bytes, b"P6", 3).map_err(|m| Error::format("<memory>", m))
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(Error::io_at(path))?;
    decode(&bytes, b"P6", 3).map_err(|m| Error::format(path, m))
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(Error::io_at(path))?;
    decode(&bytes, b"P5", 1).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn header_bytes() {
        let img = Tensor::new(vec![1, 2, 3], vec![0.0, 1.0, 0.5, 1.0, 0.0, 0.2]).unwrap();
        let bytes = encode("P6", &img, 3).unwrap();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 128, 255, 0, 51]);
    }

    #[test]
    fn roundtrip_within_quantization() {
        let img = Tensor::uniform(&[5, 7, 3], 0.0, 1.0, &mut Rng::new(1));
        let back = decode_ppm(&encode("P6", &img, 3).unwrap()).unwrap();
        assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn comments_in_header() {
        let mut bytes = b"P6\n# made by hand\n1 1\n# max\n255\n".to_vec();
        bytes.extend([10, 20, 30]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), &[1, 1, 3]);
        assert!((img.data()[2] - 30.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode_ppm(b"P5\n1 1\n255\n\0").is_err());
        assert!(decode_ppm(b"P6\n1 x\n255\n").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\0\0\0").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        let err = decode_ppm(b"P6 1 1 255").unwrap_err().to_string();
        assert!(err.contains("separator"), "{err}");
    }

    #[test]
    fn pgm_write_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let map = Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.25, 0.75]).unwrap();
        write_pgm(&p, &map).unwrap();
        let back = read_pgm(&p).unwrap();
        assert_eq!(back.shape(), &[2, 2, 1]);
        assert!((back.data()[2] - 64.0 / 255.0).abs() < 1e-15);
    }
}
