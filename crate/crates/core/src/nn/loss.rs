//! Channel softmax and categorical cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{Dims4, Tensor};

fn channel_dims(t: &Tensor) -> Result<Dims4> {
    match *t.shape() {
        [c] => Ok(Dims4 { n: 1, c, h: 1, w: 1 }),
        _ => t.dims4(),
    }
}

/// Softmax over the channel axis of a `[C]`, `[C,H,W]` or `[N,C,H,W]` tensor.
///
/// The per-pixel maximum is subtracted before exponentiation, so large
/// logits never overflow.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let d = channel_dims(logits)?;
    let p = d.plane();
    let x = logits.data();
    let mut out = vec![0.0; x.len()];
    for n in 0..d.n {
        let base = n * d.c * p;
        for i in 0..p {
            let at = |c: usize| base + c * p + i;
            let m = (0..d.c).map(|c| x[at(c)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..d.c {
                let e = (x[at(c)] - m).exp();
                out[at(c)] = e;
                z += e;
            }
            for c in 0..d.c {
                out[at(c)] /= z;
            }
        }
    }
    Ok(Tensor::raw(logits.shape().to_vec(), out))
}

/// Vector-Jacobian product of [`softmax`]: `s * (g - sum_c s g)` per pixel.
pub fn softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if probs.shape() != grad_out.shape() {
        return Err(Error::shape("softmax gradient shape mismatch"));
    }
    let d = channel_dims(probs)?;
    let p = d.plane();
    let (s, g) = (probs.data(), grad_out.data());
    let mut out = vec![0.0; s.len()];
    for n in 0..d.n {
        let base = n * d.c * p;
        for i in 0..p {
            let dot: f64 = (0..d.c).map(|c| s[base + c * p + i] * g[base + c * p + i]).sum();
            for c in 0..d.c {
                let k = base + c * p + i;
                out[k] = s[k] * (g[k] - dot);
            }
        }
    }
    Ok(Tensor::raw(probs.shape().to_vec(), out))
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the logits that produced `probs`.
    pub grad_logits: Tensor,
    /// Pixels that entered the mean.
    pub valid: usize,
}

/// Mean of `-ln p_true` over pixels not flagged in `ignore`.
///
/// `ignore` holds one value per pixel (channel extent 1); nonzero means
/// the pixel is excluded. The returned gradient has softmax folded in and
/// equals `(p - t) / N_valid` on kept pixels, 0 on ignored ones.
pub fn categorical_cross_entropy(
    probs: &Tensor,
    target: &Tensor,
    ignore: Option<&Tensor>,
) -> Result<LossOutput> {
    if probs.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ",
            probs.shape(),
            target.shape()
        )));
    }
    let d = channel_dims(probs)?;
    let p = d.plane();
    if let Some(m) = ignore {
        if m.len() != d.n * p {
            return Err(Error::shape(format!(
                "ignore mask has {} elements for {} pixels",
                m.len(),
                d.n * p
            )));
        }
    }
    let skip = |n: usize, i: usize| ignore.is_some_and(|m| m.data()[n * p + i] != 0.0);
    let valid = (0..d.n)
        .map(|n| (0..p).filter(|&i| !skip(n, i)).count())
        .sum::<usize>();
    if valid == 0 {
        return Err(Error::EmptyLoss("every pixel is ignored".into()));
    }
    let (s, t) = (probs.data(), target.data());
    let scale = 1.0 / valid as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; s.len()];
    for n in 0..d.n {
        let base = n * d.c * p;
        for i in 0..p {
            if skip(n, i) {
                continue;
            }
            for c in 0..d.c {
                let k = base + c * p + i;
                if t[k] != 0.0 {
                    loss -= t[k] * s[k].max(f64::MIN_POSITIVE).ln();
                }
                grad[k] = (s[k] - t[k]) * scale;
            }
        }
    }
    Ok(LossOutput {
        loss: loss * scale,
        grad_logits: Tensor::raw(probs.shape().to_vec(), grad),
        valid,
    })
}

/// One-hot encodes a class raster `[H,W]` (or `[N,H,W]`) into `[C,H,W]`
/// (or `[N,C,H,W]`). Codes `>= classes` become all-zero columns.
pub fn one_hot(labels: &[usize], batch: usize, h: usize, w: usize, classes: usize) -> Result<Tensor> {
    let p = h * w;
    if labels.len() != batch * p {
        return Err(Error::shape("label count does not match the requested shape"));
    }
    let mut data = vec![0.0; batch * classes * p];
    for n in 0..batch {
        for i in 0..p {
            let c = labels[n * p + i];
            if c < classes {
                data[(n * classes + c) * p + i] = 1.0;
            }
        }
    }
    let shape = if batch == 1 {
        vec![classes, h, w]
    } else {
        vec![batch, classes, h, w]
    };
    Ok(Tensor::raw(shape, data))
}
