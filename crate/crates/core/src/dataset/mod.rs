//! Labelled image sets: on-disk layout, synthetic generation and feature
//! extraction for domain profiles.
//!
//! A dataset directory holds `labels.csv` (`filename,class_name,split`) next
//! to binary PPM images that all share one size.

mod synth;

pub use synth::{class_names, generate_synthetic, render, PartAttrs, Scene, SynthConfig};

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{pooled_features, ModelParams};
use crate::netpbm;
use crate::tensor::Tensor;

pub const LABELS_FILE: &str = "labels.csv";
const LABELS_HEADER: &str = "filename,class_name,split";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `[S, S, 3]` images with values in `[0, 1]`.
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn resolution(&self) -> Option<usize> {
        self.images.first().map(|t| t.shape()[0])
    }
}

/// Writes both splits into one directory with a shared `labels.csv`.
pub fn save_dataset(dir: &Path, splits: &[&LabeledDataset]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = format!("{LABELS_HEADER}\n");
    for ds in splits {
        for (i, (img, &y)) in ds.images.iter().zip(&ds.labels).enumerate() {
            let file = format!("{}_{i:05}.ppm", ds.split);
            netpbm::write_ppm(&dir.join(&file), img)?;
            csv.push_str(&format!("{file},{},{}\n", ds.class_names[y], ds.split));
        }
    }
    fs::write(dir.join(LABELS_FILE), csv)?;
    Ok(())
}

/// Train and test splits of a dataset directory. Class indices follow the
/// order in which class names first appear in `labels.csv`, across both
/// splits.
pub fn load_dataset(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let path = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::format(&path, format!("cannot read manifest: {e}")))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        _ => return Err(Error::format(&path, format!("expected header {LABELS_HEADER}"))),
    }
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut train = LabeledDataset {
        images: vec![],
        labels: vec![],
        class_names: vec![],
        split: Split::Train,
    };
    let mut test = LabeledDataset {
        split: Split::Test,
        ..train.clone()
    };
    let mut size: Option<Vec<usize>> = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [file, class, split] = fields[..] else {
            return Err(Error::format(&path, format!("line {}: expected 3 fields", i + 1)));
        };
        let split: Split = split
            .parse()
            .map_err(|e: Error| Error::format(&path, format!("line {}: {e}", i + 1)))?;
        let y = *class_index.entry(class.to_string()).or_insert_with(|| {
            class_names.push(class.to_string());
            class_names.len() - 1
        });
        let img = netpbm::read_ppm(&dir.join(file))?;
        match &size {
            None => size = Some(img.shape().to_vec()),
            Some(s) if s != img.shape() => {
                return Err(Error::format(
                    dir.join(file),
                    format!("image is {:?}, expected {:?} like the others", img.shape(), s),
                ))
            }
            _ => {}
        }
        let ds = match split {
            Split::Train => &mut train,
            Split::Test => &mut test,
        };
        ds.images.push(img);
        ds.labels.push(y);
    }
    train.class_names = class_names.clone();
    test.class_names = class_names;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy)]
pub enum FeatureMode<'a> {
    /// 8x8 block-averaged pixels, flattened (192 values).
    Pixel,
    /// Spatially pooled backbone features.
    Model(&'a ModelParams),
}

pub const PIXEL_GRID: usize = 8;

fn pixel_features(img: &Tensor) -> Result<Vec<f64>> {
    let (h, w, c) = img.dims3()?;
    if h < PIXEL_GRID || w < PIXEL_GRID {
        return Ok(crate::ops::bilinear_resize(img, PIXEL_GRID, PIXEL_GRID)?.into_data());
    }
    let mut out = Vec::with_capacity(PIXEL_GRID * PIXEL_GRID * c);
    for by in 0..PIXEL_GRID {
        let (y0, y1) = (by * h / PIXEL_GRID, (by + 1) * h / PIXEL_GRID);
        for bx in 0..PIXEL_GRID {
            let (x0, x1) = (bx * w / PIXEL_GRID, (bx + 1) * w / PIXEL_GRID);
            let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
            for ch in 0..c {
                let mut s = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        s += img.at3(y, x, ch);
                    }
                }
                out.push(s * inv);
            }
        }
    }
    Ok(out)
}

/// One feature row per image, `[N, D]`.
pub fn extract_profile_features(ds: &LabeledDataset, mode: FeatureMode<'_>) -> Result<Tensor> {
    if ds.is_empty() {
        return Err(Error::EmptyDomain("dataset has no images".into()));
    }
    let rows = ds
        .images
        .iter()
        .map(|img| match mode {
            FeatureMode::Pixel => pixel_features(img),
            FeatureMode::Model(p) => pooled_features(p, img).map(Tensor::into_data),
        })
        .collect::<Result<Vec<_>>>()?;
    let d = rows[0].len();
    Tensor::new(vec![rows.len(), d], rows.concat())
}
