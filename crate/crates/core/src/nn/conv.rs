//! 2-D convolution (cross-correlation, no kernel flip) and its transpose.

use crate::error::{Error, Result};
use crate::tensor::{Dims4, Tensor};

/// Gradients of a convolution with respect to all three operands.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

fn kernel_dims(kernels: &Tensor) -> Result<[usize; 4]> {
    match *kernels.shape() {
        [a, b, kh, kw] => Ok([a, b, kh, kw]),
        _ => Err(Error::shape(format!(
            "kernel tensor must be rank 4, got {:?}",
            kernels.shape()
        ))),
    }
}

fn out_extent(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let span = len + 2 * pad;
    if stride == 0 {
        return Err(Error::shape("stride must be >= 1"));
    }
    if k > span || !(span - k).is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "extent {len} with kernel {k}, stride {stride}, padding {pad} gives a non-integral output"
        )));
    }
    Ok((span - k) / stride + 1)
}

/// Output positions `o` in `[lo, hi)` for which `o * stride + k - pad` hits `[0, len)`.
#[inline]
fn valid_range(len: usize, k: usize, stride: usize, pad: usize, out: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if len + pad > k {
        (len + pad - k).div_ceil(stride)
    } else {
        0
    };
    (lo, hi.min(out))
}

fn output_shape(input: &Tensor, c: usize, h: usize, w: usize) -> Vec<usize> {
    let mut s = input.shape().to_vec();
    let r = s.len();
    s[r - 3] = c;
    s[r - 2] = h;
    s[r - 1] = w;
    s
}

/// Output shape `[out_ch, (h + 2p - kh)/stride + 1, (w + 2p - kw)/stride + 1]`.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let d = input.dims4()?;
    let [oc_n, ic_n, kh, kw] = kernel_dims(kernels)?;
    if ic_n != d.c {
        return Err(Error::shape(format!(
            "input has {} channels, kernels expect {ic_n}",
            d.c
        )));
    }
    if bias.len() != oc_n {
        return Err(Error::shape(format!(
            "bias has {} entries for {oc_n} output channels",
            bias.len()
        )));
    }
    let oh = out_extent(d.h, kh, stride, padding)?;
    let ow = out_extent(d.w, kw, stride, padding)?;
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; d.n * oc_n * oh * ow];
    for n in 0..d.n {
        for oc in 0..oc_n {
            let o = &mut out[(n * oc_n + oc) * oh * ow..][..oh * ow];
            o.fill(bias.data()[oc]);
            for ic in 0..ic_n {
                let xp = &x[(n * d.c + ic) * d.plane()..][..d.plane()];
                for ky in 0..kh {
                    let (y_lo, y_hi) = valid_range(d.h, ky, stride, padding, oh);
                    for kx in 0..kw {
                        let wv = k[((oc * ic_n + ic) * kh + ky) * kw + kx];
                        let (x_lo, x_hi) = valid_range(d.w, kx, stride, padding, ow);
                        for oy in y_lo..y_hi {
                            let iy = oy * stride + ky - padding;
                            let row = &xp[iy * d.w..][..d.w];
                            let orow = &mut o[oy * ow..][..ow];
                            if stride == 1 {
                                let ix0 = x_lo + kx - padding;
                                for (ov, xv) in orow[x_lo..x_hi].iter_mut().zip(&row[ix0..]) {
                                    *ov += wv * xv;
                                }
                            } else {
                                for ox in x_lo..x_hi {
                                    orow[ox] += wv * row[ox * stride + kx - padding];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::raw(output_shape(input, oc_n, oh, ow), out))
}

/// Gradients of [`conv2d`] given the upstream gradient `grad_out`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let d = input.dims4()?;
    let [oc_n, ic_n, kh, kw] = kernel_dims(kernels)?;
    let g = grad_out.dims4()?;
    let oh = out_extent(d.h, kh, stride, padding)?;
    let ow = out_extent(d.w, kw, stride, padding)?;
    if g != (Dims4 { n: d.n, c: oc_n, h: oh, w: ow }) {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match convolution output",
            grad_out.shape()
        )));
    }
    let x = input.data();
    let k = kernels.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; oc_n];
    for n in 0..d.n {
        for oc in 0..oc_n {
            let gp = &go[(n * oc_n + oc) * oh * ow..][..oh * ow];
            gb[oc] += gp.iter().sum::<f64>();
            for ic in 0..ic_n {
                let base = (n * d.c + ic) * d.plane();
                let xp = &x[base..base + d.plane()];
                let gxp = &mut gx[base..base + d.plane()];
                for ky in 0..kh {
                    let (y_lo, y_hi) = valid_range(d.h, ky, stride, padding, oh);
                    for kx in 0..kw {
                        let ki = ((oc * ic_n + ic) * kh + ky) * kw + kx;
                        let wv = k[ki];
                        let (x_lo, x_hi) = valid_range(d.w, kx, stride, padding, ow);
                        let mut acc = 0.0;
                        for oy in y_lo..y_hi {
                            let iy = oy * stride + ky - padding;
                            let grow = &gp[oy * ow..][..ow];
                            for ox in x_lo..x_hi {
                                let ix = ox * stride + kx - padding;
                                let gv = grow[ox];
                                acc += gv * xp[iy * d.w + ix];
                                gxp[iy * d.w + ix] += wv * gv;
                            }
                        }
                        gk[ki] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::raw(input.shape().to_vec(), gx),
        kernels: Tensor::raw(kernels.shape().to_vec(), gk),
        bias: Tensor::raw(vec![oc_n], gb),
    })
}

/// Transposed convolution with kernels laid out `[in_ch, out_ch, kh, kw]`.
///
/// Output extent is `(h - 1) * stride + kh` (no padding), which for a
/// `stride x stride` kernel is exactly `h * stride`. Sharing the kernel
/// tensor, this is the adjoint of [`conv2d`] with the same stride and no
/// padding: `<conv2d(y), x> == <y, conv2d_transpose(x)>`.
pub fn conv2d_transpose(input: &Tensor, kernels: &Tensor, stride: usize) -> Result<Tensor> {
    let d = input.dims4()?;
    let [ic_n, oc_n, kh, kw] = kernel_dims(kernels)?;
    if stride == 0 {
        return Err(Error::shape("stride must be >= 1"));
    }
    if ic_n != d.c {
        return Err(Error::shape(format!(
            "input has {} channels, transposed kernels expect {ic_n}",
            d.c
        )));
    }
    let oh = (d.h - 1) * stride + kh;
    let ow = (d.w - 1) * stride + kw;
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; d.n * oc_n * oh * ow];
    for n in 0..d.n {
        for ic in 0..ic_n {
            let xp = &x[(n * d.c + ic) * d.plane()..][..d.plane()];
            for oc in 0..oc_n {
                let o = &mut out[(n * oc_n + oc) * oh * ow..][..oh * ow];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = k[((ic * oc_n + oc) * kh + ky) * kw + kx];
                        for iy in 0..d.h {
                            let orow = (iy * stride + ky) * ow + kx;
                            for ix in 0..d.w {
                                o[orow + ix * stride] += wv * xp[iy * d.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::raw(output_shape(input, oc_n, oh, ow), out))
}

/// Gradients of [`conv2d_transpose`]; the `bias` field is the per-channel
/// sum of `grad_out`, for layers that add a bias after the transpose.
pub fn conv2d_transpose_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    stride: usize,
) -> Result<ConvGrads> {
    let d = input.dims4()?;
    let [ic_n, oc_n, kh, kw] = kernel_dims(kernels)?;
    let oh = (d.h - 1) * stride + kh;
    let ow = (d.w - 1) * stride + kw;
    let g = grad_out.dims4()?;
    if g != (Dims4 { n: d.n, c: oc_n, h: oh, w: ow }) {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match transposed convolution output",
            grad_out.shape()
        )));
    }
    // the input gradient of a transpose is a forward convolution
    let zero_bias = Tensor::filled(vec![ic_n], 0.0);
    let gx = conv2d(grad_out, kernels, &zero_bias, stride, 0)?;
    let x = input.data();
    let go = grad_out.data();
    let mut gk = vec![0.0; kernels.len()];
    let mut gb = vec![0.0; oc_n];
    for n in 0..d.n {
        for oc in 0..oc_n {
            let gp = &go[(n * oc_n + oc) * oh * ow..][..oh * ow];
            gb[oc] += gp.iter().sum::<f64>();
            for ic in 0..ic_n {
                let xp = &x[(n * d.c + ic) * d.plane()..][..d.plane()];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = 0.0;
                        for iy in 0..d.h {
                            let grow = (iy * stride + ky) * ow + kx;
                            for ix in 0..d.w {
                                acc += xp[iy * d.w + ix] * gp[grow + ix * stride];
                            }
                        }
                        gk[((ic * oc_n + oc) * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        kernels: Tensor::raw(kernels.shape().to_vec(), gk),
        bias: Tensor::raw(vec![oc_n], gb),
    })
}

/// Adds `bias[c]` to every element of channel `c`.
pub fn add_channel_bias(input: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = input.dims4()?;
    if bias.len() != d.c {
        return Err(Error::shape(format!(
            "bias has {} entries for {} channels",
            bias.len(),
            d.c
        )));
    }
    let mut out = input.clone();
    for (i, plane) in out.data_mut().chunks_exact_mut(d.plane()).enumerate() {
        let b = bias.data()[i % d.c];
        plane.iter_mut().for_each(|v| *v += b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Direct-definition convolution used as an oracle.
    fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor, s: usize, p: usize) -> Tensor {
        let d = x.dims4().unwrap();
        let [oc_n, ic_n, kh, kw] = kernel_dims(k).unwrap();
        let oh = (d.h + 2 * p - kh) / s + 1;
        let ow = (d.w + 2 * p - kw) / s + 1;
        let mut out = vec![0.0; d.n * oc_n * oh * ow];
        for n in 0..d.n {
            for oc in 0..oc_n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[oc];
                        for ic in 0..ic_n {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy < 0 || ix < 0 || iy >= d.h as isize || ix >= d.w as isize {
                                        continue;
                                    }
                                    acc += k.data()[((oc * ic_n + ic) * kh + ky) * kw + kx]
                                        * x.data()[((n * d.c + ic) * d.h + iy as usize) * d.w
                                            + ix as usize];
                                }
                            }
                        }
                        out[((n * oc_n + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[d.n, oc_n, oh, ow], out).unwrap()
    }

    #[test]
    fn unit_1x1_kernel_is_identity() {
        let x = Tensor::random(&[1, 5, 5], &mut SeededRng::new(1), -1.0, 1.0).unwrap();
        let k = Tensor::new(&[1, 1, 1, 1], 1.0).unwrap();
        let b = Tensor::new(&[1], 0.0).unwrap();
        assert_eq!(conv2d(&x, &k, &b, 1, 0).unwrap(), x);
    }

    #[test]
    fn constant_input_ones_kernel() {
        let c = 1.5;
        let x = Tensor::new(&[1, 5, 5], c).unwrap();
        let k = Tensor::new(&[1, 1, 3, 3], 1.0).unwrap();
        let b = Tensor::new(&[1], 0.0).unwrap();
        let y = conv2d(&x, &k, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 9.0 * c));
    }

    #[test]
    fn padded_shape() {
        let x = Tensor::new(&[4, 256, 256], 0.0).unwrap();
        let k = Tensor::new(&[8, 4, 3, 3], 0.0).unwrap();
        let b = Tensor::new(&[8], 0.0).unwrap();
        assert_eq!(conv2d(&x, &k, &b, 1, 1).unwrap().shape(), &[8, 256, 256]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::new(&[2, 5, 5], 0.0).unwrap();
        let k = Tensor::new(&[1, 3, 3, 3], 0.0).unwrap();
        let b = Tensor::new(&[1], 0.0).unwrap();
        assert!(matches!(conv2d(&x, &k, &b, 1, 0), Err(Error::Shape(_))));
        let k = Tensor::new(&[1, 2, 2, 2], 0.0).unwrap();
        // (5 - 2) / 2 is not integral
        assert!(matches!(conv2d(&x, &k, &b, 2, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = SeededRng::new(5);
        for &(s, p) in &[(1, 0), (1, 1), (2, 0), (2, 1), (3, 2)] {
            let x = Tensor::random(&[2, 3, 7, 7], &mut rng, -1.0, 1.0).unwrap();
            let k = Tensor::random(&[4, 3, 3, 3], &mut rng, -1.0, 1.0).unwrap();
            let b = Tensor::random(&[4], &mut rng, -1.0, 1.0).unwrap();
            if (7 + 2 * p - 3) % s != 0 {
                continue;
            }
            let fast = conv2d(&x, &k, &b, s, p).unwrap();
            let slow = naive_conv(&x, &k, &b, s, p);
            assert!(fast.max_abs_diff(&slow) < 1e-12, "s={s} p={p}");
        }
    }

    #[test]
    fn transpose_shape_and_identity() {
        let x = Tensor::random(&[1, 2, 2], &mut SeededRng::new(3), 0.0, 1.0).unwrap();
        let k = Tensor::new(&[1, 3, 2, 2], 1.0).unwrap();
        assert_eq!(conv2d_transpose(&x, &k, 2).unwrap().shape(), &[3, 4, 4]);
        let unit = Tensor::new(&[1, 1, 1, 1], 1.0).unwrap();
        assert_eq!(conv2d_transpose(&x, &unit, 1).unwrap(), x);
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = SeededRng::new(9);
        for &(s, kk) in &[(1, 3), (2, 2), (2, 3)] {
            let k = Tensor::random(&[2, 3, kk, kk], &mut rng, -1.0, 1.0).unwrap();
            let x = Tensor::random(&[2, 5, 5], &mut rng, -1.0, 1.0).unwrap();
            let tx = conv2d_transpose(&x, &k, s).unwrap();
            let y = Tensor::random(tx.shape(), &mut rng, -1.0, 1.0).unwrap();
            let zero = Tensor::new(&[2], 0.0).unwrap();
            let cy = conv2d(&y, &k, &zero, s, 0).unwrap();
            assert_eq!(cy.shape(), x.shape());
            assert!((cy.dot(&x) - y.dot(&tx)).abs() < 1e-10);
        }
    }
}
