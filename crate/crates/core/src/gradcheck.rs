//! Finite-difference verification of every trainable tensor's gradient of
//! `CE + L_A` on a small seeded model.

use crate::error::{Error, Result};
use crate::model::{backward, forward, forward_cached, ModelConfig, ModelParams, PARAM_NAMES};
use crate::ops::softmax_cross_entropy;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::trainer::attention_reg_loss;

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// 8x8 input, M = 2 attention maps, C = 4 channels, K = 3 classes.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        resolution: 8,
        widths: [3, 4],
        channels: 4,
        maps: 2,
        classes: 3,
    }
}

/// [`tiny_config`] at 16x16. At 8x8 the attention grid is a single cell and
/// the row normalization of the pooled features cancels each map's scale, so
/// the attention head's true gradient is zero; here it is not.
pub fn attention_config() -> ModelConfig {
    ModelConfig {
        resolution: 16,
        ..tiny_config()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl ParamCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// `|a - n| / max(|a|, |n|)`, with exact zeros on both sides counting as a
/// match. Gradients below `1e-10` in both estimates are treated as zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-10 {
        return 0.0;
    }
    (analytic - numeric).abs() / scale
}

struct Problem {
    params: ModelParams,
    image: Tensor,
    label: usize,
    centers: Tensor,
}

/// Required distance of ReLU inputs from zero, in probe steps.
const RELU_MARGIN_STEPS: f64 = 10.0;
/// Required size of pooled values, in probe steps. Central differences on
/// `sqrt(x)` have relative error about `(eps / x)^2 / 8`.
const POOLED_MARGIN_STEPS: f64 = 50.0;
const MAX_DRAWS: u64 = 10_000;

impl Problem {
    /// Draws candidate problems from `seed` until one is smooth well
    /// beyond the probe step around the evaluation point and every attention
    /// map is active, so that central differences are meaningful and every
    /// tensor receives a non-trivial gradient.
    fn new(cfg: ModelConfig, seed: u64, eps: f64) -> Result<Self> {
        let master = Rng::new(seed);
        for draw in 0..MAX_DRAWS {
            let params = ModelParams::init(cfg, &mut master.split(2 * draw))?;
            let mut rng = master.split(2 * draw + 1);
            let s = cfg.resolution;
            let image = Tensor::uniform(&[s, s, 3], 0.0, 1.0, &mut rng);
            let centers = Tensor::uniform(&[cfg.maps, cfg.channels], 0.0, 0.5, &mut rng);
            let label = rng.below(cfg.classes);
            let (pack, cache) = forward_cached(&params, &image)?;
            let alive = (0..cfg.maps).all(|k| {
                pack.attention
                    .data()
                    .iter()
                    .skip(k)
                    .step_by(cfg.maps)
                    .any(|&a| a > 0.0)
            });
            if alive
                && cache.relu_margin() > RELU_MARGIN_STEPS * eps
                && cache.pooled_margin() > POOLED_MARGIN_STEPS * eps
            {
                return Ok(Problem {
                    params,
                    image,
                    label,
                    centers,
                });
            }
        }
        Err(Error::InvalidConfig(format!(
            "no smooth evaluation point found for eps {eps} in {MAX_DRAWS} draws"
        )))
    }

    fn loss(&self, params: &ModelParams) -> Result<f64> {
        let pack = forward(params, &self.image)?;
        let (ce, _) = softmax_cross_entropy(&pack.logits, self.label)?;
        let (la, _) = attention_reg_loss(&pack.parts, &self.centers)?;
        Ok(ce + la)
    }

    fn analytic(&self) -> Result<ModelParams> {
        let (pack, cache) = forward_cached(&self.params, &self.image)?;
        let (_, gl) = softmax_cross_entropy(&pack.logits, self.label)?;
        let (_, gp) = attention_reg_loss(&pack.parts, &self.centers)?;
        backward(&self.params, &pack, &cache, &gl, Some(&gp))
    }
}

/// Compares analytic and central-difference gradients for every parameter
/// tensor of a [`tiny_config`] model, in [`PARAM_NAMES`] order. `corrupt`
/// names a tensor whose analytic gradient is deliberately perturbed
/// (negative control).
pub fn run(seed: u64, eps: f64, corrupt: Option<&str>) -> Result<Vec<ParamCheck>> {
    run_with(tiny_config(), seed, eps, corrupt)
}

pub fn run_with(cfg: ModelConfig, seed: u64, eps: f64, corrupt: Option<&str>) -> Result<Vec<ParamCheck>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    if let Some(name) = corrupt {
        if !PARAM_NAMES.contains(&name) {
            return Err(Error::InvalidConfig(format!(
                "unknown parameter '{name}' (expected one of {})",
                PARAM_NAMES.join(", ")
            )));
        }
    }
    let problem = Problem::new(cfg, seed, eps)?;
    let mut grads = problem.analytic()?;
    let mut out = Vec::with_capacity(PARAM_NAMES.len());
    for (t, name) in PARAM_NAMES.iter().enumerate() {
        if corrupt == Some(name) {
            for g in grads.tensors_mut()[t].data_mut() {
                *g = *g * 1.05 + 1e-3;
            }
        }
        let n = grads.tensors()[t].len();
        let mut worst = ParamCheck {
            name,
            max_rel_err: 0.0,
            worst: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..n {
            let mut plus = problem.params.clone();
            plus.tensors_mut()[t].data_mut()[i] += eps;
            let mut minus = problem.params.clone();
            minus.tensors_mut()[t].data_mut()[i] -= eps;
            let numeric = (problem.loss(&plus)? - problem.loss(&minus)?) / (2.0 * eps);
            let analytic = grads.tensors()[t].data()[i];
            let err = relative_error(analytic, numeric);
            if err > worst.max_rel_err || i == 0 {
                worst = ParamCheck {
                    name,
                    max_rel_err: err,
                    worst: i,
                    analytic,
                    numeric,
                };
            }
        }
        out.push(worst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((relative_error(-2.0, 2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn seeded_model_passes_and_covers_every_tensor() {
        let rows = run(7, DEFAULT_EPS, None).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.name).collect();
        assert_eq!(names, PARAM_NAMES.to_vec());
        for r in &rows {
            assert!(r.passes(DEFAULT_TOLERANCE), "{r:?}");
        }
    }

    #[test]
    fn attention_head_is_checked_at_16x16() {
        let rows = run_with(attention_config(), 7, DEFAULT_EPS, None).unwrap();
        for r in &rows {
            assert!(r.passes(DEFAULT_TOLERANCE), "{r:?}");
        }
        let attn = rows.iter().find(|r| r.name == "attn_w").unwrap();
        assert!(attn.analytic.abs() > 1e-8, "{attn:?}");
    }

    #[test]
    fn corruption_is_caught_and_named() {
        let rows = run(7, DEFAULT_EPS, Some("conv2_w")).unwrap();
        let failing: Vec<&str> = rows
            .iter()
            .filter(|r| !r.passes(DEFAULT_TOLERANCE))
            .map(|r| r.name)
            .collect();
        assert_eq!(failing, vec!["conv2_w"]);
        assert!(run(7, DEFAULT_EPS, Some("nope")).is_err());
        assert!(run(7, 0.0, None).is_err());
    }
}
