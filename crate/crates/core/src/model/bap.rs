//! Bilinear attention pooling.
//!
//! For every attention map `A_k` the part-feature row is the spatial mean of
//! `A_k ⊙ F`, passed through a signed square root and scaled to unit L2 norm.
//! Rows that come out exactly zero stay zero.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SQRT_EPS: f64 = 1e-12;

fn signed_sqrt(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * (x.abs() + SQRT_EPS).sqrt()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BapCache {
    raw: Vec<f64>,
    norms: Vec<f64>,
}

impl BapCache {
    pub(crate) fn min_nonzero_raw(&self) -> f64 {
        self.raw
            .iter()
            .filter(|v| **v != 0.0)
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Spatial mean of `A_k ⊙ F`, shape `[M, C]`, before any normalization.
pub fn raw_part_features(f: &Tensor, a: &Tensor) -> Result<Tensor> {
    let (h, w, c) = f.dims3()?;
    let (ah, aw, m) = a.dims3()?;
    if (ah, aw) != (h, w) {
        return Err(Error::shape(format!(
            "feature maps are {h}x{w} but attention maps are {ah}x{aw}"
        )));
    }
    let mut raw = vec![0.0; m * c];
    for (fpx, apx) in f.data().chunks_exact(c).zip(a.data().chunks_exact(m)) {
        for (k, &av) in apx.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (r, &fv) in raw[k * c..(k + 1) * c].iter_mut().zip(fpx) {
                *r += av * fv;
            }
        }
    }
    let inv = 1.0 / (h * w) as f64;
    raw.iter_mut().for_each(|v| *v *= inv);
    Tensor::new(vec![m, c], raw)
}

pub(crate) fn forward(f: &Tensor, a: &Tensor) -> Result<(Tensor, BapCache)> {
    let raw = raw_part_features(f, a)?;
    let (m, c) = raw.dims2()?;
    let mut p = raw.map(signed_sqrt);
    let mut norms = Vec::with_capacity(m);
    for row in p.data_mut().chunks_exact_mut(c) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
        norms.push(n);
    }
    Ok((
        p,
        BapCache {
            raw: raw.into_data(),
            norms,
        },
    ))
}

pub fn bilinear_attention_pool(f: &Tensor, a: &Tensor) -> Result<Tensor> {
    forward(f, a).map(|(p, _)| p)
}

/// Pulls `grad_p` back to the feature maps and the attention maps.
pub(crate) fn backward(
    grad_p: &Tensor,
    p: &Tensor,
    cache: &BapCache,
    f: &Tensor,
    a: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (h, w, c) = f.dims3()?;
    let m = a.dims3()?.2;
    grad_p.check_same_shape(p)?;
    let gp = grad_p.data();
    let pd = p.data();

    // through the row normalization: (I - p p^T) g / n, then the signed sqrt
    let mut graw = vec![0.0; m * c];
    for k in 0..m {
        let n = cache.norms[k];
        if n == 0.0 {
            continue;
        }
        let row = k * c..(k + 1) * c;
        let dot: f64 = gp[row.clone()].iter().zip(&pd[row.clone()]).map(|(g, p)| g * p).sum();
        for i in row {
            let ds = (gp[i] - pd[i] * dot) / n;
            let x = cache.raw[i];
            if x != 0.0 {
                graw[i] = ds / (2.0 * (x.abs() + SQRT_EPS).sqrt());
            }
        }
    }

    let inv = 1.0 / (h * w) as f64;
    let mut gf = vec![0.0; f.len()];
    let mut ga = vec![0.0; a.len()];
    for ((fpx, apx), (gfpx, gapx)) in f
        .data()
        .chunks_exact(c)
        .zip(a.data().chunks_exact(m))
        .zip(gf.chunks_exact_mut(c).zip(ga.chunks_exact_mut(m)))
    {
        for k in 0..m {
            let gr = &graw[k * c..(k + 1) * c];
            let mut s = 0.0;
            for (g, fv) in gr.iter().zip(fpx) {
                s += g * fv;
            }
            gapx[k] = s * inv;
            let av = apx[k] * inv;
            if av != 0.0 {
                for (o, g) in gfpx.iter_mut().zip(gr) {
                    *o += av * g;
                }
            }
        }
    }
    Ok((
        Tensor::new(f.shape().to_vec(), gf)?,
        Tensor::new(a.shape().to_vec(), ga)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::global_avg_pool;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn oracle(f: &Tensor, a: &Tensor) -> Tensor {
        let (h, w, c) = f.dims3().unwrap();
        let m = a.shape()[2];
        let mut out = Tensor::zeros(&[m, c]);
        for k in 0..m {
            let mut row = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        s += a.at3(y, x, k) * f.at3(y, x, ch);
                    }
                }
                let mean = s / (h * w) as f64;
                row[ch] = if mean > 0.0 {
                    (mean + 1e-12).sqrt()
                } else if mean < 0.0 {
                    -(-mean + 1e-12).sqrt()
                } else {
                    0.0
                };
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for ch in 0..c {
                out.data_mut()[k * c + ch] = if norm > 0.0 { row[ch] / norm } else { 0.0 };
            }
        }
        out
    }

    #[test]
    fn ones_mask_gives_pooled_features() {
        let mut rng = Rng::new(1);
        let f = Tensor::uniform(&[3, 4, 5], 0.0, 2.0, &mut rng);
        let a = Tensor::filled(&[3, 4, 2], 1.0);
        let raw = raw_part_features(&f, &a).unwrap();
        let pooled = global_avg_pool(&f).unwrap();
        for k in 0..2 {
            for c in 0..5 {
                assert!((raw.at2(k, c) - pooled.data()[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_mask_gives_zero_row() {
        let mut rng = Rng::new(2);
        let f = Tensor::uniform(&[3, 3, 4], -1.0, 1.0, &mut rng);
        let mut a = Tensor::uniform(&[3, 3, 2], 0.0, 1.0, &mut rng);
        for px in a.data_mut().chunks_exact_mut(2) {
            px[1] = 0.0;
        }
        let p = bilinear_attention_pool(&f, &a).unwrap();
        assert!(p.row(1).iter().all(|&v| v == 0.0));
        let n: f64 = p.row(0).iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let f = Tensor::uniform(&[4, 5, 6], -1.0, 1.0, &mut rng);
            let a = Tensor::uniform(&[4, 5, 3], 0.0, 1.0, &mut rng);
            let p = bilinear_attention_pool(&f, &a).unwrap();
            assert!(p.max_abs_diff(&oracle(&f, &a)) < 1e-10);
        }
    }

    #[test]
    fn spatial_mismatch_is_an_error() {
        let f = Tensor::zeros(&[3, 3, 2]);
        let a = Tensor::zeros(&[3, 2, 2]);
        assert!(matches!(
            bilinear_attention_pool(&f, &a),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let f = Tensor::uniform(&[3, 3, 4], 0.1, 1.0, &mut rng);
        let a = Tensor::uniform(&[3, 3, 2], 0.1, 1.0, &mut rng);
        let r = Tensor::uniform(&[2, 4], -1.0, 1.0, &mut rng);
        let loss = |f: &Tensor, a: &Tensor| -> f64 {
            let p = bilinear_attention_pool(f, a).unwrap();
            p.data().iter().zip(r.data()).map(|(x, y)| x * y).sum()
        };
        let (p, cache) = forward(&f, &a).unwrap();
        let (gf, ga) = backward(&r, &p, &cache, &f, &a).unwrap();
        let eps = 1e-5;
        for (t, g, is_f) in [(&f, &gf, true), (&a, &ga, false)] {
            for i in 0..t.len() {
                let mut plus = t.clone();
                plus.data_mut()[i] += eps;
                let mut minus = t.clone();
                minus.data_mut()[i] -= eps;
                let fd = if is_f {
                    (loss(&plus, &a) - loss(&minus, &a)) / (2.0 * eps)
                } else {
                    (loss(&f, &plus) - loss(&f, &minus)) / (2.0 * eps)
                };
                let an = g.data()[i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-6, "element {i}: fd {fd} vs analytic {an}");
            }
        }
    }

    proptest! {
        #[test]
        fn rows_are_unit_or_zero(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let f = Tensor::uniform(&[3, 3, 4], -1.0, 1.0, &mut rng);
            let mut a = Tensor::uniform(&[3, 3, 3], -0.5, 1.0, &mut rng);
            a = a.map(|v| v.max(0.0));
            let p = bilinear_attention_pool(&f, &a).unwrap();
            for k in 0..3 {
                let n = p.row(k).iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            }
        }
    }
}
