//! Batch normalization and dropout.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Exponential moving averages tracked during training and used at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
    pub momentum: f64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: Tensor::filled(vec![channels], 0.0),
            var: Tensor::filled(vec![channels], 1.0),
            momentum: 0.1,
        }
    }
}

/// What [`batch_norm_backward`] needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
    training: bool,
}

/// Per-channel normalization followed by `gamma * x_hat + beta`.
///
/// Training mode normalizes with the batch moments (biased variance over
/// batch and spatial axes) and updates `running`; inference mode uses the
/// running moments. With a batch of one the statistics are those of the
/// single image.
pub fn batch_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
    running: &mut RunningStats,
    training: bool,
) -> Result<(Tensor, BatchNormCache)> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("batch norm eps must be > 0, got {eps}")));
    }
    let d = input.dims4()?;
    if gamma.len() != d.c || beta.len() != d.c || running.mean.len() != d.c {
        return Err(Error::shape(format!(
            "batch norm parameters sized for {} channels, input has {}",
            gamma.len(),
            d.c
        )));
    }
    let x = input.data();
    let p = d.plane();
    let count = (d.n * p) as f64;
    let mut mean = vec![0.0; d.c];
    let mut var = vec![0.0; d.c];
    if training {
        for (i, plane) in x.chunks_exact(p).enumerate() {
            mean[i % d.c] += plane.iter().sum::<f64>();
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for (i, plane) in x.chunks_exact(p).enumerate() {
            let m = mean[i % d.c];
            var[i % d.c] += plane.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        var.iter_mut().for_each(|v| *v /= count);
        let mo = running.momentum;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for c in 0..d.c {
            let rm = &mut running.mean.data_mut()[c];
            *rm = (1.0 - mo) * *rm + mo * mean[c];
            let rv = &mut running.var.data_mut()[c];
            *rv = (1.0 - mo) * *rv + mo * var[c] * unbias;
        }
    } else {
        mean.copy_from_slice(running.mean.data());
        var.copy_from_slice(running.var.data());
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut normalized = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for (i, (src, (nrm, dst))) in x
        .chunks_exact(p)
        .zip(normalized.chunks_exact_mut(p).zip(out.chunks_exact_mut(p)))
        .enumerate()
    {
        let c = i % d.c;
        let (g, b) = (gamma.data()[c], beta.data()[c]);
        for ((&v, n), o) in src.iter().zip(nrm.iter_mut()).zip(dst.iter_mut()) {
            *n = (v - mean[c]) * inv_std[c];
            *o = g * *n + b;
        }
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::raw(shape.clone(), out),
        BatchNormCache {
            normalized: Tensor::raw(shape, normalized),
            inv_std,
            training,
        },
    ))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batch_norm_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    gamma: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    if grad_out.shape() != cache.normalized.shape() {
        return Err(Error::shape("upstream gradient does not match batch norm output"));
    }
    let d = grad_out.dims4()?;
    let p = d.plane();
    let count = (d.n * p) as f64;
    let go = grad_out.data();
    let xh = cache.normalized.data();
    let mut g_gamma = vec![0.0; d.c];
    let mut g_beta = vec![0.0; d.c];
    for (i, (gp, xp)) in go.chunks_exact(p).zip(xh.chunks_exact(p)).enumerate() {
        let c = i % d.c;
        g_beta[c] += gp.iter().sum::<f64>();
        g_gamma[c] += gp.iter().zip(xp).map(|(g, x)| g * x).sum::<f64>();
    }
    let mut gx = vec![0.0; go.len()];
    for (i, ((gp, xp), dst)) in go
        .chunks_exact(p)
        .zip(xh.chunks_exact(p))
        .zip(gx.chunks_exact_mut(p))
        .enumerate()
    {
        let c = i % d.c;
        let scale = gamma.data()[c] * cache.inv_std[c];
        if cache.training {
            let (sum_g, sum_gx) = (g_beta[c], g_gamma[c]);
            for ((o, &g), &x) in dst.iter_mut().zip(gp).zip(xp) {
                *o = scale / count * (count * g - sum_g - x * sum_gx);
            }
        } else {
            for (o, &g) in dst.iter_mut().zip(gp) {
                *o = scale * g;
            }
        }
    }
    Ok((
        Tensor::raw(grad_out.shape().to_vec(), gx),
        Tensor::raw(vec![d.c], g_gamma),
        Tensor::raw(vec![d.c], g_beta),
    ))
}

/// Inverted dropout.
///
/// In training mode every element is zeroed with probability `rate` and
/// survivors are scaled by `1 / (1 - rate)`; the returned mask holds the
/// per-element multiplier for the backward pass. Inference is the identity.
pub fn dropout(
    input: &Tensor,
    rate: f64,
    rng: &mut SeededRng,
    training: bool,
) -> Result<(Tensor, Option<Tensor>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
        .collect();
    let mask = Tensor::raw(input.shape().to_vec(), mask);
    let out = input.zip_map(&mask, |a, m| a * m)?;
    Ok((out, Some(mask)))
}
