//! Synthetic fine-grained "birds".
//!
//! Every image shows a dark bird (body, head, eye, beak, wing, tail fan) on a
//! dark striped, noisy background. Placement, scale, pose and the body and
//! background colours vary per image; the class only decides the small parts:
//! the wing patch (one of four hues, plus its angle) and the tail fan (one of
//! two hues, plus the beak length).
//!
//! A `domain_shift` in `[0, 1]` moves a whole family of datasets away from the
//! default one: part hues rotate, wing angle and beak length drift, and the
//! palette changes. Datasets with nearby shifts share most of their appearance.

use std::f64::consts::PI;

use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub resolution: usize,
    pub seed: u64,
    pub domain_shift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 8,
            per_class_train: 25,
            per_class_test: 12,
            resolution: 64,
            seed: 7,
            domain_shift: 0.0,
        }
    }
}

/// Everything about an image that is not decided by the class.
#[derive(Debug, Clone, Copy)]
pub struct Scene {
    pub background: [f64; 3],
    pub stripe_angle: f64,
    pub stripe_freq: f64,
    pub stripe_phase: f64,
    pub stripe_amp: f64,
    pub noise_seed: u64,
    /// Bird centre as a fraction of the image side.
    pub center: (f64, f64),
    pub scale: f64,
    pub rotation: f64,
    pub body: [f64; 3],
}

/// The class-dependent part attributes.
#[derive(Debug, Clone, Copy)]
pub struct PartAttrs {
    /// Direction of the wing tip, radians from the tail axis.
    pub wing_angle: f64,
    /// Colour of the wing patch.
    pub wing_color: [f64; 3],
    /// Colour of the tail fan.
    pub tail_color: [f64; 3],
    /// Beak length over beak height.
    pub beak_aspect: f64,
}

const WING_LEVELS: usize = 4;

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

impl Scene {
    pub fn sample(rng: &mut Rng, domain_shift: f64) -> Scene {
        let jitter = |rng: &mut Rng, c: [f64; 3], amp: f64| {
            [
                (c[0] + rng.uniform(-amp, amp)).clamp(0.0, 1.0),
                (c[1] + rng.uniform(-amp, amp)).clamp(0.0, 1.0),
                (c[2] + rng.uniform(-amp, amp)).clamp(0.0, 1.0),
            ]
        };
        let bg = lerp3([0.10, 0.14, 0.09], [0.14, 0.09, 0.15], domain_shift);
        let body = lerp3([0.19, 0.15, 0.11], [0.11, 0.15, 0.21], domain_shift);
        Scene {
            background: jitter(rng, bg, 0.03),
            stripe_angle: rng.uniform(0.0, PI),
            stripe_freq: rng.uniform(0.15, 0.45),
            stripe_phase: rng.uniform(0.0, 2.0 * PI),
            stripe_amp: rng.uniform(0.005, 0.015),
            noise_seed: rng.next_u64(),
            center: (rng.uniform(0.44, 0.50), rng.uniform(0.52, 0.58)),
            scale: 1.1 * rng.uniform(0.94, 1.06),
            rotation: rng.uniform(-0.15, 0.15),
            body: jitter(rng, body, 0.05),
        }
    }
}

impl PartAttrs {
    /// Class `label`: the wing level cycles through four hues and angles,
    /// the tail level (one per block of four classes) sets the tail shade and
    /// beak length.
    pub fn sample(label: usize, rng: &mut Rng, domain_shift: f64) -> PartAttrs {
        let wing_level = label % WING_LEVELS;
        let tail_level = label / WING_LEVELS;
        let wing_center = (60.0 + 25.0 * wing_level as f64 + 25.0 * domain_shift).to_radians();
        let hue = (wing_level as f64 / WING_LEVELS as f64 + 0.3 * domain_shift).fract();
        let tail_hue = (0.125 + 0.5 * tail_level as f64 + 0.3 * domain_shift).fract();
        let beak_center = (0.8 + 1.6 * tail_level as f64) * (1.0 + 0.8 * domain_shift);
        PartAttrs {
            wing_angle: wing_center + rng.uniform(-4.0, 4.0).to_radians(),
            wing_color: wing_palette(hue).map(|c| (c + rng.uniform(-0.04, 0.04)).clamp(0.0, 1.0)),
            tail_color: wing_palette(tail_hue).map(|c| (c + rng.uniform(-0.04, 0.04)).clamp(0.0, 1.0)),
            beak_aspect: beak_center * rng.uniform(0.9, 1.1),
        }
    }
}

/// A muted colour on the hue circle, `hue` in `[0, 1)`.
fn wing_palette(hue: f64) -> [f64; 3] {
    let channel = |offset: f64| 0.50 + 0.42 * (2.0 * PI * (hue - offset)).cos();
    [channel(0.0), channel(1.0 / 3.0), channel(2.0 / 3.0)]
}

fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), u: (f64, f64), v: (f64, f64)| {
        (u.0 - o.0) * (v.1 - o.1) - (u.1 - o.1) * (v.0 - o.0)
    };
    let d1 = cross(p, a, b);
    let d2 = cross(p, b, c);
    let d3 = cross(p, c, a);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

const BEAK_COLOR: [f64; 3] = [0.36, 0.26, 0.10];
const EYE_COLOR: [f64; 3] = [0.05, 0.05, 0.05];

/// Colour of the bird at local coordinates (bird units, x towards the head,
/// y up), or `None` for background.
fn bird_color(x: f64, y: f64, scene: &Scene, parts: &PartAttrs) -> Option<[f64; 3]> {
    // beak: an ellipse of fixed area in front of the head
    let area = 0.0070;
    let half_len = (area * parts.beak_aspect / PI).sqrt();
    let half_h = area / (PI * half_len);
    let (bx, by) = (x - (0.28 + half_len * 0.8), y - 0.10);
    if (bx / half_len).powi(2) + (by / half_h).powi(2) <= 1.0 {
        return Some(BEAK_COLOR);
    }
    // eye
    if (x - 0.24).powi(2) + (y - 0.12).powi(2) <= 0.022f64.powi(2) {
        return Some(EYE_COLOR);
    }
    // wing: root on the back, tip in the class direction
    let root_a = (0.16, 0.02);
    let root_b = (-0.16, 0.02);
    let mid = (0.0, 0.02);
    let tip = (
        mid.0 + 0.40 * parts.wing_angle.cos(),
        mid.1 + 0.40 * parts.wing_angle.sin(),
    );
    if in_triangle((x, y), root_a, root_b, tip) {
        return Some(parts.wing_color);
    }
    // tail: a fan behind the body
    if in_triangle((x, y), (-0.12, 0.0), (-0.38, 0.20), (-0.38, -0.20)) {
        return Some(parts.tail_color);
    }
    // head
    if (x - 0.20).powi(2) + (y - 0.10).powi(2) <= 0.085f64.powi(2) {
        return Some(scene.body);
    }
    // body
    if (x / 0.22).powi(2) + (y / 0.13).powi(2) <= 1.0 {
        return Some(scene.body);
    }
    None
}

/// Renders one `S x S x 3` image with 2x2 supersampling.
pub fn render(side: usize, scene: &Scene, parts: &PartAttrs) -> Tensor {
    let s = side as f64;
    let (cos_r, sin_r) = (scene.rotation.cos(), scene.rotation.sin());
    let (sdir_x, sdir_y) = (scene.stripe_angle.cos(), scene.stripe_angle.sin());
    let mut noise = Rng::new(scene.noise_seed);
    let mut out = Vec::with_capacity(side * side * 3);
    // stripes are defined in 64-pixel units so every resolution shows the same pattern
    let unit = 64.0 / s;
    for py in 0..side {
        for px in 0..side {
            let mut acc = [0.0; 3];
            for sub in 0..4 {
                let fx = px as f64 + 0.25 + 0.5 * (sub % 2) as f64;
                let fy = py as f64 + 0.25 + 0.5 * (sub / 2) as f64;
                // image -> bird frame; image y points down, bird y up
                let dx = (fx / s - scene.center.0) / scene.scale;
                let dy = -(fy / s - scene.center.1) / scene.scale;
                let lx = cos_r * dx + sin_r * dy;
                let ly = -sin_r * dx + cos_r * dy;
                let color = bird_color(lx, ly, scene, parts).unwrap_or_else(|| {
                    let t = (fx * sdir_x + fy * sdir_y) * unit;
                    let stripe = scene.stripe_amp * (scene.stripe_freq * t + scene.stripe_phase).sin();
                    [
                        scene.background[0] + stripe,
                        scene.background[1] + stripe,
                        scene.background[2] + stripe,
                    ]
                });
                for c in 0..3 {
                    acc[c] += 0.25 * color[c];
                }
            }
            for a in acc {
                out.push((a + noise.uniform(-0.01, 0.01)).clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(vec![side, side, 3], out).expect("render produces S*S*3 values")
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("species_{i}")).collect()
}

fn generate_split(cfg: &SynthConfig, per_class: usize, split: Split, rng: Rng) -> LabeledDataset {
    let mut images = Vec::with_capacity(per_class * cfg.n_classes);
    let mut labels = Vec::with_capacity(per_class * cfg.n_classes);
    for i in 0..per_class {
        for y in 0..cfg.n_classes {
            let mut item = rng.split((i * cfg.n_classes + y) as u64);
            let scene = Scene::sample(&mut item, cfg.domain_shift);
            let parts = PartAttrs::sample(y, &mut item, cfg.domain_shift);
            images.push(render(cfg.resolution, &scene, &parts));
            labels.push(y);
        }
    }
    LabeledDataset {
        images,
        labels,
        class_names: class_names(cfg.n_classes),
        split,
    }
}

/// Train and test splits drawn from independent streams of `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> (LabeledDataset, LabeledDataset) {
    let master = Rng::new(cfg.seed);
    let train = generate_split(cfg, cfg.per_class_train, Split::Train, master.split(1));
    let test = generate_split(cfg, cfg.per_class_test, Split::Test, master.split(2));
    (train, test)
}
