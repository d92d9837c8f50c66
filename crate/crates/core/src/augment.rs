//! Attention-guided augmentation: zoom into (crop) or erase (drop) the region
//! one attention map highlights.

use crate::error::{Error, Result};
use crate::model::{attention_bbox, zoom_to_box, BoundingBox};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    Uniform,
    /// Probability proportional to the map's mean activation.
    #[default]
    ActivationWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub theta_crop: f64,
    pub theta_drop: f64,
    pub selection: Selection,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            theta_crop: 0.5,
            theta_drop: 0.5,
            selection: Selection::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("theta_crop", self.theta_crop), ("theta_drop", self.theta_drop)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        Ok(())
    }
}

pub fn select_attention_map(attention: &Tensor, selection: Selection, rng: &mut Rng) -> Result<usize> {
    let (_, _, m) = attention.dims3()?;
    Ok(match selection {
        Selection::Uniform => rng.below(m),
        Selection::ActivationWeighted => {
            let mut mass = vec![0.0; m];
            for px in attention.data().chunks_exact(m) {
                for (s, &v) in mass.iter_mut().zip(px) {
                    *s += v.max(0.0);
                }
            }
            rng.weighted_index(&mass)
        }
    })
}

/// Scales a non-negative map by its maximum. An all-zero map stays zero.
pub fn normalize_by_max(map: &Tensor) -> Tensor {
    let hi = map.max();
    if hi > 0.0 {
        map.map(|v| (v / hi).max(0.0))
    } else {
        Tensor::zeros(map.shape())
    }
}

/// Crop box on the attention grid for one map.
pub fn crop_box(map: &Tensor, theta: f64) -> Result<BoundingBox> {
    attention_bbox(&normalize_by_max(map), theta)
}

pub fn attention_crop(image: &Tensor, map: &Tensor, cfg: &AugmentConfig) -> Result<Tensor> {
    let (gh, gw) = map.dims2()?;
    let bbox = crop_box(map, cfg.theta_crop)?;
    zoom_to_box(image, &bbox, gh, gw)
}

/// Per-pixel erase mask (row-major, `img_h * img_w`): the normalized map is
/// upsampled by nearest neighbour and compared against `theta`.
pub fn drop_mask(map: &Tensor, img_h: usize, img_w: usize, theta: f64) -> Result<Vec<bool>> {
    let (gh, gw) = map.dims2()?;
    let norm = normalize_by_max(map);
    let mut mask = Vec::with_capacity(img_h * img_w);
    for y in 0..img_h {
        let r = y * gh / img_h;
        for x in 0..img_w {
            mask.push(norm.at2(r, x * gw / img_w) > theta);
        }
    }
    Ok(mask)
}

pub fn attention_drop(image: &Tensor, map: &Tensor, cfg: &AugmentConfig) -> Result<Tensor> {
    let (h, w, c) = image.dims3()?;
    let mask = drop_mask(map, h, w, cfg.theta_drop)?;
    let mut out = image.clone();
    for (px, &erase) in out.data_mut().chunks_exact_mut(c).zip(&mask) {
        if erase {
            px.fill(0.0);
        }
    }
    Ok(out)
}
