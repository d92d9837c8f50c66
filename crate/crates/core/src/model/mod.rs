//! Desk-scale attention network: a three-block convolutional backbone, a
//! 1x1 attention head, bilinear attention pooling and a linear classifier.

mod bap;
pub mod checkpoint;
mod inference;

pub use bap::{bilinear_attention_pool, raw_part_features};
pub use inference::{
    attention_bbox, object_map, predict_two_pass, zoom_to_box, BoundingBox, TwoPass,
    DEFAULT_OBJECT_THETA,
};

use crate::error::{Error, Result};
use crate::ops::{
    add_channel_bias, channel_bias_backward, conv2d, conv2d_backward, relu, relu_backward,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Side length `S` of the square RGB input.
    pub resolution: usize,
    /// Channel widths of the first two backbone blocks.
    pub widths: [usize; 2],
    /// Feature channels `C` produced by the last backbone block.
    pub channels: usize,
    /// Number of attention maps `M`.
    pub maps: usize,
    /// Number of classes `K`.
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            resolution: 64,
            widths: [8, 16],
            channels: 32,
            maps: 8,
            classes: 8,
        }
    }
}

/// Output side of a 3x3, stride-2, pad-1 convolution.
fn block_out(side: usize) -> usize {
    (side - 1) / 2 + 1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("resolution", self.resolution),
            ("width 1", self.widths[0]),
            ("width 2", self.widths[1]),
            ("channels", self.channels),
            ("maps", self.maps),
            ("classes", self.classes),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Side of the feature/attention grid.
    pub fn feature_side(&self) -> usize {
        block_out(block_out(block_out(self.resolution)))
    }

    pub fn param_shapes(&self) -> [Vec<usize>; 10] {
        let [c1, c2] = self.widths;
        let (c, m, k) = (self.channels, self.maps, self.classes);
        [
            vec![3, 3, 3, c1],
            vec![c1],
            vec![3, 3, c1, c2],
            vec![c2],
            vec![3, 3, c2, c],
            vec![c],
            vec![1, 1, c, m],
            vec![m],
            vec![k, m * c],
            vec![k],
        ]
    }
}

pub const PARAM_NAMES: [&str; 10] = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b", "attn_w", "attn_b", "fc_w",
    "fc_b",
];

/// Trainable tensors, in [`PARAM_NAMES`] order. The same type carries
/// gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub conv3_w: Tensor,
    pub conv3_b: Tensor,
    pub attn_w: Tensor,
    pub attn_b: Tensor,
    pub fc_w: Tensor,
    pub fc_b: Tensor,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let s = config.param_shapes();
        ModelParams {
            config,
            conv1_w: Tensor::zeros(&s[0]),
            conv1_b: Tensor::zeros(&s[1]),
            conv2_w: Tensor::zeros(&s[2]),
            conv2_b: Tensor::zeros(&s[3]),
            conv3_w: Tensor::zeros(&s[4]),
            conv3_b: Tensor::zeros(&s[5]),
            attn_w: Tensor::zeros(&s[6]),
            attn_b: Tensor::zeros(&s[7]),
            fc_w: Tensor::zeros(&s[8]),
            fc_b: Tensor::zeros(&s[9]),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut p = Self::zeros(config);
        for (i, t) in p.tensors_mut().into_iter().enumerate() {
            if i % 2 == 1 {
                continue;
            }
            let shape = t.shape().to_vec();
            let (fan_in, fan_out) = match shape[..] {
                [kh, kw, cin, cout] => (kh * kw * cin, kh * kw * cout),
                [out, inp] => (inp, out),
                _ => unreachable!(),
            };
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            *t = Tensor::uniform(&shape, -a, a, rng);
        }
        Ok(p)
    }

    /// Build from tensors in [`PARAM_NAMES`] order, checking shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::shape(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, s), name) in tensors.iter().zip(&shapes).zip(PARAM_NAMES) {
            if t.shape() != &s[..] {
                return Err(Error::shape(format!(
                    "{name}: expected {s:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        let mut p = Self::zeros(config);
        for (dst, src) in p.tensors_mut().into_iter().zip(tensors) {
            *dst = src;
        }
        Ok(p)
    }

    pub fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
            &self.attn_w,
            &self.attn_b,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
            &mut self.attn_w,
            &mut self.attn_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    /// Backbone tensors are the first six.
    pub fn is_backbone(index: usize) -> bool {
        index < 6
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// `self += a * other`, tensor by tensor.
    pub fn axpy(&mut self, a: f64, other: &ModelParams) {
        for (d, s) in self.tensors_mut().into_iter().zip(other.tensors()) {
            d.axpy(a, s).expect("parameter sets share a config");
        }
    }
}

/// Everything the forward pass exposes.
#[derive(Debug, Clone)]
pub struct AttentionPack {
    /// Feature maps `[H, W, C]`.
    pub features: Tensor,
    /// Non-negative attention maps `[H, W, M]`.
    pub attention: Tensor,
    /// Normalized part features `[M, C]`.
    pub parts: Tensor,
    pub logits: Tensor,
}

/// Intermediate values kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    image: Tensor,
    z1: Tensor,
    h1: Tensor,
    z2: Tensor,
    h2: Tensor,
    z3: Tensor,
    za: Tensor,
    bap: bap::BapCache,
}

impl ForwardCache {
    /// Smallest `|z|` over all ReLU inputs: perturbations below this cannot
    /// cross a kink.
    pub fn relu_margin(&self) -> f64 {
        [&self.z1, &self.z2, &self.z3, &self.za]
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Smallest non-zero pooled value entering the signed square root, where
    /// the forward pass is most strongly curved.
    pub fn pooled_margin(&self) -> f64 {
        self.bap.min_nonzero_raw()
    }
}

fn conv_block(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let mut z = conv2d(x, w, stride, pad)?;
    add_channel_bias(&mut z, b)?;
    Ok(z)
}

fn check_image(params: &ModelParams, image: &Tensor) -> Result<()> {
    let s = params.config.resolution;
    if image.shape() != [s, s, 3] {
        return Err(Error::shape(format!(
            "model expects a {s}x{s}x3 image, got {:?}",
            image.shape()
        )));
    }
    Ok(())
}

pub fn forward(params: &ModelParams, image: &Tensor) -> Result<AttentionPack> {
    forward_cached(params, image).map(|(pack, _)| pack)
}

pub fn forward_cached(params: &ModelParams, image: &Tensor) -> Result<(AttentionPack, ForwardCache)> {
    check_image(params, image)?;
    let z1 = conv_block(image, &params.conv1_w, &params.conv1_b, 2, 1)?;
    let h1 = relu(&z1);
    let z2 = conv_block(&h1, &params.conv2_w, &params.conv2_b, 2, 1)?;
    let h2 = relu(&z2);
    let z3 = conv_block(&h2, &params.conv3_w, &params.conv3_b, 2, 1)?;
    let features = relu(&z3);
    let za = conv_block(&features, &params.attn_w, &params.attn_b, 1, 0)?;
    let attention = relu(&za);
    let (parts, bap_cache) = bap::forward(&features, &attention)?;

    let (k, d) = params.fc_w.dims2()?;
    let w = params.fc_w.data();
    let pv = parts.data();
    let logits: Vec<f64> = (0..k)
        .map(|j| {
            let row = &w[j * d..(j + 1) * d];
            params.fc_b.data()[j] + row.iter().zip(pv).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();

    let pack = AttentionPack {
        features,
        attention,
        parts,
        logits: Tensor::from_vec(logits),
    };
    let cache = ForwardCache {
        image: image.clone(),
        z1,
        h1,
        z2,
        h2,
        z3,
        za,
        bap: bap_cache,
    };
    Ok((pack, cache))
}

/// Parameter gradients given the upstream gradient on the logits and an
/// optional extra gradient arriving directly at the part features.
pub fn backward(
    params: &ModelParams,
    pack: &AttentionPack,
    cache: &ForwardCache,
    grad_logits: &Tensor,
    grad_parts: Option<&Tensor>,
) -> Result<ModelParams> {
    let mut g = ModelParams::zeros(params.config);
    let (k, d) = params.fc_w.dims2()?;
    if grad_logits.shape() != [k] {
        return Err(Error::shape(format!(
            "grad_logits {:?}, expected [{k}]",
            grad_logits.shape()
        )));
    }

    let gl = grad_logits.data();
    let pv = pack.parts.data();
    let mut gp = match grad_parts {
        Some(t) => {
            t.check_same_shape(&pack.parts)?;
            t.clone()
        }
        None => Tensor::zeros(pack.parts.shape()),
    };
    {
        let w = params.fc_w.data();
        let gw = g.fc_w.data_mut();
        let gpd = gp.data_mut();
        for j in 0..k {
            let lj = gl[j];
            for i in 0..d {
                gw[j * d + i] = lj * pv[i];
                gpd[i] += w[j * d + i] * lj;
            }
        }
        g.fc_b = grad_logits.clone();
    }

    let (mut gf, ga) = bap::backward(&gp, &pack.parts, &cache.bap, &pack.features, &pack.attention)?;

    let gza = relu_backward(&ga, &cache.za)?;
    g.attn_b = channel_bias_backward(&gza);
    let (gf_attn, gwa) = conv2d_backward(&gza, &pack.features, &params.attn_w, 1, 0)?;
    g.attn_w = gwa;
    gf.axpy(1.0, &gf_attn)?;

    let gz3 = relu_backward(&gf, &cache.z3)?;
    g.conv3_b = channel_bias_backward(&gz3);
    let (gh2, gw3) = conv2d_backward(&gz3, &cache.h2, &params.conv3_w, 2, 1)?;
    g.conv3_w = gw3;

    let gz2 = relu_backward(&gh2, &cache.z2)?;
    g.conv2_b = channel_bias_backward(&gz2);
    let (gh1, gw2) = conv2d_backward(&gz2, &cache.h1, &params.conv2_w, 2, 1)?;
    g.conv2_w = gw2;

    let gz1 = relu_backward(&gh1, &cache.z1)?;
    g.conv1_b = channel_bias_backward(&gz1);
    let (_, gw1) = conv2d_backward(&gz1, &cache.image, &params.conv1_w, 2, 1)?;
    g.conv1_w = gw1;
    Ok(g)
}

/// Backbone features pooled over space, `[C]`.
pub fn pooled_features(params: &ModelParams, image: &Tensor) -> Result<Tensor> {
    check_image(params, image)?;
    let h1 = relu(&conv_block(image, &params.conv1_w, &params.conv1_b, 2, 1)?);
    let h2 = relu(&conv_block(&h1, &params.conv2_w, &params.conv2_b, 2, 1)?);
    let f = relu(&conv_block(&h2, &params.conv3_w, &params.conv3_b, 2, 1)?);
    crate::ops::global_avg_pool(&f)
}
