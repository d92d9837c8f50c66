//! Forward operations and their hand-derived backward passes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn conv_out_dims(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    let (h, w, cin) = input.dims3()?;
    let (kh, kw, kcin, _) = match kernels.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(format!(
                "kernels must be [Kh, Kw, Cin, Cout], got {:?}",
                kernels.shape()
            )))
        }
    };
    if kcin != cin {
        return Err(Error::shape(format!(
            "input has {cin} channels but kernels expect {kcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::shape("stride must be positive"));
    }
    if kh > h + 2 * pad || kw > w + 2 * pad {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        )));
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    Ok((h, w, cin, kh, kw, oh, ow))
}

/// Zero-padded 2-D cross-correlation.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (h, w, cin, kh, kw, oh, ow) = conv_out_dims(input, kernels, stride, pad)?;
    let cout = kernels.shape()[3];
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xin = &x[(iy as usize * w + ix as usize) * cin..][..cin];
                    let kbase = (ky * kw + kx) * cin * cout;
                    for (ci, &v) in xin.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let krow = &k[kbase + ci * cout..][..cout];
                        for (a, &kv) in acc.iter_mut().zip(krow) {
                            *a += v * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

/// Gradients of [`conv2d`] with respect to its input and kernels.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor)> {
    let (h, w, cin, kh, kw, oh, ow) = conv_out_dims(input, kernels, stride, pad)?;
    let cout = kernels.shape()[3];
    if grad_out.shape() != [oh, ow, cout] {
        return Err(Error::shape(format!(
            "grad_out {:?} does not match forward output [{oh}, {ow}, {cout}]",
            grad_out.shape()
        )));
    }
    let x = input.data();
    let k = kernels.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    for oy in 0..oh {
        for ox in 0..ow {
            let gout = &g[(oy * ow + ox) * cout..][..cout];
            if gout.iter().all(|&v| v == 0.0) {
                continue;
            }
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xoff = (iy as usize * w + ix as usize) * cin;
                    let kbase = (ky * kw + kx) * cin * cout;
                    for ci in 0..cin {
                        let krow = &k[kbase + ci * cout..][..cout];
                        let mut s = 0.0;
                        for (&gv, &kv) in gout.iter().zip(krow) {
                            s += gv * kv;
                        }
                        gx[xoff + ci] += s;
                        let v = x[xoff + ci];
                        if v != 0.0 {
                            let gkrow = &mut gk[kbase + ci * cout..][..cout];
                            for (a, &gv) in gkrow.iter_mut().zip(gout) {
                                *a += v * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(kernels.shape().to_vec(), gk)?,
    ))
}

/// Adds `bias[c]` to every spatial position of channel `c`.
pub fn add_channel_bias(x: &mut Tensor, bias: &Tensor) -> Result<()> {
    let c = *x.shape().last().unwrap();
    if bias.shape() != [c] {
        return Err(Error::shape(format!(
            "bias {:?} does not match {c} channels",
            bias.shape()
        )));
    }
    let b = bias.data();
    for px in x.data_mut().chunks_exact_mut(c) {
        for (v, &bv) in px.iter_mut().zip(b) {
            *v += bv;
        }
    }
    Ok(())
}

/// Gradient of [`add_channel_bias`] with respect to the bias.
pub fn channel_bias_backward(grad: &Tensor) -> Tensor {
    let c = *grad.shape().last().unwrap();
    let mut out = vec![0.0; c];
    for px in grad.data().chunks_exact(c) {
        for (o, &g) in out.iter_mut().zip(px) {
            *o += g;
        }
    }
    Tensor::from_vec(out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes `grad` where the pre-activation was positive.
pub fn relu_backward(grad: &Tensor, pre: &Tensor) -> Result<Tensor> {
    grad.check_same_shape(pre)?;
    let data = grad
        .data()
        .iter()
        .zip(pre.data())
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(grad.shape().to_vec(), data)
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let mut out = vec![0.0; c];
    for px in x.data().chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    let inv = 1.0 / (h * w) as f64;
    for o in &mut out {
        *o *= inv;
    }
    Ok(Tensor::from_vec(out))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &Tensor) -> Tensor {
    let m = logits.max();
    let exps: Vec<f64> = logits.data().iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::from_vec(exps.into_iter().map(|e| e / total).collect())
}

/// Cross-entropy of `softmax(logits)` against `label`, with the gradient
/// `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let k = logits.len();
    if label >= k {
        return Err(Error::InvalidLabel { label, classes: k });
    }
    let m = logits.max();
    let sum_exp: f64 = logits.data().iter().map(|&z| (z - m).exp()).sum();
    let log_z = m + sum_exp.ln();
    let loss = log_z - logits.data()[label];
    let mut grad = softmax(logits);
    grad.data_mut()[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

/// Bilinear resampling with half-pixel centers (`align_corners = false`),
/// clamping samples to the border.
pub fn bilinear_resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = img.dims3()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape(format!("cannot resize to {out_h}x{out_w}")));
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = taps(out_h, h);
    let cols = taps(out_w, w);
    let x = img.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let p00 = x[(y0 * w + x0) * c + ch];
                let p01 = x[(y0 * w + x1) * c + ch];
                let p10 = x[(y1 * w + x0) * c + ch];
                let p11 = x[(y1 * w + x1) * c + ch];
                let top = p00 + fx * (p01 - p00);
                let bottom = p10 + fx * (p11 - p10);
                out.push(top + fy * (bottom - top));
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out)
}

/// Copies rows `r0..r1` and columns `c0..c1` (half-open) of an `[H, W, C]`
/// tensor.
pub fn crop(img: &Tensor, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<Tensor> {
    let (h, w, c) = img.dims3()?;
    if r0 >= r1 || c0 >= c1 || r1 > h || c1 > w {
        return Err(Error::shape(format!(
            "crop rows {r0}..{r1} cols {c0}..{c1} invalid for {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity((r1 - r0) * (c1 - c0) * c);
    for r in r0..r1 {
        out.extend_from_slice(&img.data()[(r * w + c0) * c..(r * w + c1) * c]);
    }
    Tensor::new(vec![r1 - r0, c1 - c0, c], out)
}
