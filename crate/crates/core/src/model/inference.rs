//! Object localization from attention and two-pass prediction.

use crate::error::{Error, Result};
use crate::ops::{bilinear_resize, crop, softmax};
use crate::tensor::Tensor;

use super::{forward, ModelParams};

/// Threshold applied to the normalized object map when locating the zoom box.
pub const DEFAULT_OBJECT_THETA: f64 = 0.5;

/// Axis-aligned box with inclusive row and column bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn full(height: usize, width: usize) -> Self {
        BoundingBox {
            top: 0,
            bottom: height - 1,
            left: 0,
            right: width - 1,
        }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.top <= other.top
            && self.bottom >= other.bottom
            && self.left <= other.left
            && self.right >= other.right
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    /// Maps a box on an `grid_h x grid_w` grid onto an `img_h x img_w` image,
    /// rounding outward. Returns half-open `(r0, r1, c0, c1)` pixel bounds.
    pub fn scale_to(
        &self,
        grid_h: usize,
        grid_w: usize,
        img_h: usize,
        img_w: usize,
    ) -> (usize, usize, usize, usize) {
        let r0 = self.top * img_h / grid_h;
        let r1 = ((self.bottom + 1) * img_h).div_ceil(grid_h);
        let c0 = self.left * img_w / grid_w;
        let c1 = ((self.right + 1) * img_w).div_ceil(grid_w);
        (r0, r1.min(img_h), c0, c1.min(img_w))
    }
}

/// Mean over the attention maps, min-max scaled to `[0, 1]`. A constant map
/// becomes all ones.
pub fn object_map(attention: &Tensor) -> Result<Tensor> {
    let (h, w, m) = attention.dims3()?;
    let inv = 1.0 / m as f64;
    let mean: Vec<f64> = attention
        .data()
        .chunks_exact(m)
        .map(|px| px.iter().sum::<f64>() * inv)
        .collect();
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let data = if range > 0.0 {
        mean.into_iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![1.0; h * w]
    };
    Tensor::new(vec![h, w], data)
}

/// Smallest box holding every cell with `map >= theta`; the full extent when
/// no cell qualifies.
pub fn attention_bbox(map: &Tensor, theta: f64) -> Result<BoundingBox> {
    let (h, w) = map.dims2()?;
    let mut bbox: Option<BoundingBox> = None;
    for r in 0..h {
        for c in 0..w {
            if map.at2(r, c) >= theta {
                let b = bbox.get_or_insert(BoundingBox {
                    top: r,
                    bottom: r,
                    left: c,
                    right: c,
                });
                b.top = b.top.min(r);
                b.bottom = b.bottom.max(r);
                b.left = b.left.min(c);
                b.right = b.right.max(c);
            }
        }
    }
    Ok(bbox.unwrap_or_else(|| BoundingBox::full(h, w)))
}

/// Crops the image region under a grid box and resizes it back to the
/// image's own size.
pub fn zoom_to_box(image: &Tensor, bbox: &BoundingBox, grid_h: usize, grid_w: usize) -> Result<Tensor> {
    let (h, w, _) = image.dims3()?;
    if bbox.bottom >= grid_h || bbox.right >= grid_w {
        return Err(Error::shape(format!(
            "box {bbox:?} outside {grid_h}x{grid_w} grid"
        )));
    }
    let (r0, r1, c0, c1) = bbox.scale_to(grid_h, grid_w, h, w);
    if (r0, r1, c0, c1) == (0, h, 0, w) {
        return Ok(image.clone());
    }
    bilinear_resize(&crop(image, r0, r1, c0, c1)?, h, w)
}

#[derive(Debug, Clone)]
pub struct TwoPass {
    /// `0.5 * (p1 + p2)`.
    pub p: Tensor,
    /// Class probabilities on the full image.
    pub p1: Tensor,
    /// Class probabilities on the zoomed object region.
    pub p2: Tensor,
    /// Object box on the attention grid.
    pub bbox: BoundingBox,
}

/// Full-image prediction averaged with a prediction on the zoomed object
/// region located from the attention maps.
pub fn predict_two_pass(params: &ModelParams, image: &Tensor, theta: f64) -> Result<TwoPass> {
    let first = forward(params, image)?;
    let p1 = softmax(&first.logits);
    let map = object_map(&first.attention)?;
    let (gh, gw) = map.dims2()?;
    let bbox = attention_bbox(&map, theta)?;
    let zoomed = zoom_to_box(image, &bbox, gh, gw)?;
    let p2 = softmax(&forward(params, &zoomed)?.logits);
    let p = Tensor::from_vec(
        p1.data()
            .iter()
            .zip(p2.data())
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    );
    Ok(TwoPass { p, p1, p2, bbox })
}
