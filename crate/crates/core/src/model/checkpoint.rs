//! Checkpoint directories: `manifest.txt` (key=value lines) plus one TDF file
//! per parameter tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::tdf;

pub const MANIFEST: &str = "manifest.txt";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save(dir: &Path, params: &ModelParams, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let c = &params.config;
    let manifest = format!(
        "version={CHECKPOINT_VERSION}\nM={}\nC={}\nK={}\nresolution={}\nseed={seed}\nwidths={},{}\n",
        c.maps, c.channels, c.classes, c.resolution, c.widths[0], c.widths[1]
    );
    fs::write(dir.join(MANIFEST), manifest)?;
    for (name, t) in PARAM_NAMES.iter().zip(params.tensors()) {
        tdf::write(&dir.join(format!("{name}.tdf")), t)?;
    }
    Ok(())
}

fn parse_manifest(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Loads a checkpoint, returning the parameters and the recorded seed.
pub fn load(dir: &Path) -> Result<(ModelParams, u64)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io_at(&path))?;
    let kv = parse_manifest(&path, &text)?;
    let get = |key: &str| -> Result<&str> {
        kv.get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(&path, format!("missing key {key}")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(&path, format!("{key} is not a non-negative integer")))
    };
    let version = num("version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::format(&path, format!("unsupported version {version}")));
    }
    let widths: Vec<usize> = match kv.get("widths") {
        Some(w) => w
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(&path, "widths must be two integers"))?,
        None => ModelConfig::default().widths.to_vec(),
    };
    if widths.len() != 2 {
        return Err(Error::format(&path, "widths must be two integers"));
    }
    let config = ModelConfig {
        resolution: num("resolution")?,
        widths: [widths[0], widths[1]],
        channels: num("C")?,
        maps: num("M")?,
        classes: num("K")?,
    };
    let seed: u64 = get("seed")?
        .parse()
        .map_err(|_| Error::format(&path, "seed is not an integer"))?;
    let tensors = PARAM_NAMES
        .iter()
        .map(|name| tdf::read(&dir.join(format!("{name}.tdf"))))
        .collect::<Result<Vec<_>>>()?;
    let params = ModelParams::from_tensors(config, tensors)
        .map_err(|e| Error::format(dir, format!("checkpoint does not match manifest: {e}")))?;
    Ok((params, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn cfg() -> ModelConfig {
        ModelConfig {
            resolution: 16,
            widths: [3, 5],
            channels: 6,
            maps: 2,
            classes: 4,
        }
    }

    #[test]
    fn save_load_roundtrip_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::init(cfg(), &mut Rng::new(1)).unwrap();
        save(dir.path(), &p, 99).unwrap();
        let (q, seed) = load(dir.path()).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(q.config, p.config);
        for (a, b) in q.tensors().iter().zip(p.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn manifest_shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::init(cfg(), &mut Rng::new(1)).unwrap();
        save(dir.path(), &p, 1).unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        fs::write(dir.path().join(MANIFEST), text.replace("M=2", "M=3")).unwrap();
        let err = load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("does not match"), "{err}");

        save(dir.path(), &p, 1).unwrap();
        tdf::write(&dir.path().join("fc_b.tdf"), &Tensor::zeros(&[5])).unwrap();
        assert!(load(dir.path()).is_err());
    }

    #[test]
    fn missing_keys_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), "version=1\nM=2\n").unwrap();
        let err = load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("missing key"), "{err}");
    }
}
