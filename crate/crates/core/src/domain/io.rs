//! Profile directories: `manifest.csv` (`class_name,weight`) and
//! `centroids.tdf`.

use std::fs;
use std::path::Path;

use super::DomainProfile;
use crate::error::{Error, Result};
use crate::tdf;

pub const MANIFEST: &str = "manifest.csv";
pub const CENTROIDS: &str = "centroids.tdf";

pub fn save(dir: &Path, profile: &DomainProfile) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = String::from("class_name,weight\n");
    for (name, w) in profile.class_names.iter().zip(&profile.weights) {
        if name.contains([',', '\n', '"']) {
            return Err(Error::InvalidInput(format!(
                "class name {name:?} cannot be written to CSV"
            )));
        }
        csv.push_str(&format!("{name},{w}\n"));
    }
    fs::write(dir.join(MANIFEST), csv)?;
    tdf::write(&dir.join(CENTROIDS), &profile.centroids)
}

/// Loads a profile, naming it after the directory. Weights are renormalized
/// to sum to one (they were written with full precision, so this only absorbs
/// rounding).
pub fn load(dir: &Path) -> Result<DomainProfile> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io_at(&path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "class_name,weight" => {}
        _ => return Err(Error::format(&path, "expected header class_name,weight")),
    }
    let mut names = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, w) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::format(&path, format!("line {}: expected two fields", i + 2)))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::format(&path, format!("line {}: bad weight {w:?}", i + 2)))?;
        names.push(name.to_string());
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if names.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyDomain(format!("{}: no classes with mass", dir.display())));
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::format(&path, format!("weights sum to {total}")));
    }
    let weights = weights.iter().map(|w| w / total).collect();
    let centroids = tdf::read(&dir.join(CENTROIDS))?;
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "profile".into());
    DomainProfile::new(name, centroids, weights, names)
        .map_err(|e| Error::format(dir, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("birds");
        let p = DomainProfile::new(
            "birds",
            Tensor::new(vec![3, 2], vec![0.5, 1.0, 2.0, 3.0, -1.0, 0.25]).unwrap(),
            vec![0.2, 0.3, 0.5],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        save(&path, &p).unwrap();
        assert!(fs::read_to_string(path.join(MANIFEST)).unwrap().starts_with("class_name,weight\n"));
        let q = load(&path).unwrap();
        assert_eq!(q.name, "birds");
        assert_eq!(q.class_names, p.class_names);
        assert_eq!(q.centroids, p.centroids);
        for (a, b) in q.weights.iter().zip(&p.weights) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), "name,w\na,1\n").unwrap();
        assert!(load(dir.path()).is_err());
        fs::write(dir.path().join(MANIFEST), "class_name,weight\na,0.5\n").unwrap();
        assert!(load(dir.path()).is_err());
        fs::write(dir.path().join(MANIFEST), "class_name,weight\na,1\n").unwrap();
        assert!(load(dir.path()).is_err()); // no centroids
        tdf::write(&dir.path().join(CENTROIDS), &Tensor::zeros(&[2, 3])).unwrap();
        assert!(load(dir.path()).is_err()); // row count mismatch
    }
}
