//! Max/min/average pooling and index-based unpooling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Argmax positions recorded by [`max_pool2d`].
///
/// `indices[k]` is the flat, row-major index into the pre-pool input of
/// the element that won output position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    window: usize,
    stride: usize,
    indices: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Builds indices from raw parts, e.g. when replaying a stored layout.
    pub fn from_parts(
        input_shape: Vec<usize>,
        output_shape: Vec<usize>,
        window: usize,
        stride: usize,
        indices: Vec<usize>,
    ) -> Result<Self> {
        if output_shape.iter().product::<usize>() != indices.len() {
            return Err(Error::shape("index count does not match output shape"));
        }
        Ok(Self {
            input_shape,
            output_shape,
            window,
            stride,
            indices,
        })
    }
}

struct PoolGeom {
    planes: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    out_shape: Vec<usize>,
}

fn geometry(input: &Tensor, window: usize, stride: usize) -> Result<PoolGeom> {
    let d = input.dims4()?;
    if window == 0 || stride == 0 {
        return Err(Error::shape("pool window and stride must be >= 1"));
    }
    if window > d.h || window > d.w {
        return Err(Error::shape(format!(
            "pool window {window} larger than input {}x{}",
            d.h, d.w
        )));
    }
    if !(d.h - window).is_multiple_of(stride) || !(d.w - window).is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "input {}x{} not divisible by window {window} / stride {stride}",
            d.h, d.w
        )));
    }
    let oh = (d.h - window) / stride + 1;
    let ow = (d.w - window) / stride + 1;
    let mut out_shape = input.shape().to_vec();
    let r = out_shape.len();
    out_shape[r - 2] = oh;
    out_shape[r - 1] = ow;
    Ok(PoolGeom {
        planes: d.n * d.c,
        h: d.h,
        w: d.w,
        oh,
        ow,
        out_shape,
    })
}

/// Selects one element per window, scanning row-major; `better(candidate,
/// best)` decides replacement so ties keep the first cell.
fn select_pool(
    input: &Tensor,
    window: usize,
    stride: usize,
    better: impl Fn(f64, f64) -> bool,
) -> Result<(Tensor, PoolIndices)> {
    let g = geometry(input, window, stride)?;
    let x = input.data();
    let mut out = Vec::with_capacity(g.planes * g.oh * g.ow);
    let mut idx = Vec::with_capacity(out.capacity());
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let mut best_i = base + oy * stride * g.w + ox * stride;
                let mut best = x[best_i];
                for ky in 0..window {
                    for kx in 0..window {
                        let i = base + (oy * stride + ky) * g.w + ox * stride + kx;
                        if better(x[i], best) {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                idx.push(best_i);
            }
        }
    }
    let indices = PoolIndices {
        input_shape: input.shape().to_vec(),
        output_shape: g.out_shape.clone(),
        window,
        stride,
        indices: idx,
    };
    Ok((Tensor::raw(g.out_shape, out), indices))
}

/// Max pooling; ties resolve to the first cell of the window in row-major order.
pub fn max_pool2d(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, PoolIndices)> {
    select_pool(input, window, stride, |c, b| c > b)
}

pub fn min_pool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    select_pool(input, window, stride, |c, b| c < b).map(|(t, _)| t)
}

pub fn avg_pool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    let g = geometry(input, window, stride)?;
    let x = input.data();
    let scale = 1.0 / (window * window) as f64;
    let mut out = Vec::with_capacity(g.planes * g.oh * g.ow);
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let mut acc = 0.0;
                for ky in 0..window {
                    let row = base + (oy * stride + ky) * g.w + ox * stride;
                    acc += x[row..row + window].iter().sum::<f64>();
                }
                out.push(acc * scale);
            }
        }
    }
    Ok(Tensor::raw(g.out_shape, out))
}

/// Spreads each output gradient uniformly over its window.
pub fn avg_pool2d_backward(
    input_shape: &[usize],
    grad_out: &Tensor,
    window: usize,
    stride: usize,
) -> Result<Tensor> {
    let probe = Tensor::filled(input_shape.to_vec(), 0.0);
    let g = geometry(&probe, window, stride)?;
    if grad_out.shape() != g.out_shape.as_slice() {
        return Err(Error::shape("upstream gradient does not match pooled shape"));
    }
    let scale = 1.0 / (window * window) as f64;
    let mut gx = vec![0.0; probe.len()];
    let go = grad_out.data();
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let v = go[(p * g.oh + oy) * g.ow + ox] * scale;
                for ky in 0..window {
                    let row = base + (oy * stride + ky) * g.w + ox * stride;
                    gx[row..row + window].iter_mut().for_each(|e| *e += v);
                }
            }
        }
    }
    Ok(Tensor::raw(input_shape.to_vec(), gx))
}

/// Routes each output gradient back to the recorded argmax cell.
pub fn max_pool2d_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    if grad_out.shape() != indices.output_shape.as_slice() {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            indices.output_shape
        )));
    }
    let mut gx = vec![0.0; indices.input_shape.iter().product()];
    for (&i, &g) in indices.indices.iter().zip(grad_out.data()) {
        gx[i] += g;
    }
    Ok(Tensor::raw(indices.input_shape.clone(), gx))
}

/// Places every pooled value at its recorded index in a zero tensor of
/// `out_shape`; all other cells stay exactly 0.
pub fn unpool_with_indices(
    pooled: &Tensor,
    indices: &PoolIndices,
    out_shape: &[usize],
) -> Result<Tensor> {
    if pooled.shape() != indices.output_shape.as_slice() {
        return Err(Error::shape(format!(
            "pooled tensor {:?} does not match indices for {:?}",
            pooled.shape(),
            indices.output_shape
        )));
    }
    let mut out = Tensor::new(out_shape, 0.0)?;
    let len = out.len();
    let data = out.data_mut();
    for (k, (&i, &v)) in indices.indices.iter().zip(pooled.data()).enumerate() {
        if i >= len {
            return Err(Error::Corruption(format!(
                "pool index {i} at position {k} outside output of {len} elements"
            )));
        }
        data[i] = v;
    }
    Ok(out)
}

/// Gradient of [`unpool_with_indices`] with respect to the pooled values.
pub fn unpool_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    let len = grad_out.len();
    let g = grad_out.data();
    let mut gp = Vec::with_capacity(indices.indices.len());
    for &i in &indices.indices {
        if i >= len {
            return Err(Error::Corruption(format!("pool index {i} outside gradient")));
        }
        gp.push(g[i]);
    }
    Ok(Tensor::raw(indices.output_shape.clone(), gp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Tensor {
        Tensor::from_vec(
            &[1, 4, 4],
            vec![
                1., 2., 5., 6., //
                3., 4., 7., 8., //
                9., 10., 13., 14., //
                11., 12., 15., 16.,
            ],
        )
        .unwrap()
    }

    #[test]
    fn max_pool_example() {
        let (p, idx) = max_pool2d(&example(), 2, 2).unwrap();
        assert_eq!(p.shape(), &[1, 2, 2]);
        assert_eq!(p.data(), &[4., 8., 12., 16.]);
        assert_eq!(idx.indices(), &[5, 7, 13, 15]);
    }

    #[test]
    fn constant_input_takes_first_cell() {
        let x = Tensor::new(&[1, 4, 4], 3.0).unwrap();
        let (p, idx) = max_pool2d(&x, 2, 2).unwrap();
        assert!(p.data().iter().all(|&v| v == 3.0));
        assert_eq!(idx.indices(), &[0, 2, 8, 10]);
    }

    #[test]
    fn halves_spatial_dims_and_rejects_odd() {
        let x = Tensor::new(&[2, 8, 6], 0.0).unwrap();
        assert_eq!(max_pool2d(&x, 2, 2).unwrap().0.shape(), &[2, 4, 3]);
        let odd = Tensor::new(&[1, 5, 4], 0.0).unwrap();
        assert!(matches!(max_pool2d(&odd, 2, 2), Err(Error::Shape(_))));
        let tiny = Tensor::new(&[1, 1, 1], 0.0).unwrap();
        assert!(matches!(max_pool2d(&tiny, 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn unpool_places_values() {
        let (p, idx) = max_pool2d(&example(), 2, 2).unwrap();
        let u = unpool_with_indices(&p, &idx, &[1, 4, 4]).unwrap();
        let mut expected = vec![0.0; 16];
        expected[5] = 4.0;
        expected[7] = 8.0;
        expected[13] = 12.0;
        expected[15] = 16.0;
        assert_eq!(u.data(), expected.as_slice());
        assert_eq!(u.sum(), p.sum());
    }

    #[test]
    fn unpool_rejects_corrupt_index() {
        let (p, idx) = max_pool2d(&example(), 2, 2).unwrap();
        let bad = PoolIndices::from_parts(
            idx.input_shape().to_vec(),
            idx.output_shape().to_vec(),
            2,
            2,
            vec![0, 1, 2, 99],
        )
        .unwrap();
        assert!(matches!(
            unpool_with_indices(&p, &bad, &[1, 4, 4]),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn min_and_avg() {
        assert_eq!(min_pool2d(&example(), 2, 2).unwrap().data(), &[1., 5., 9., 13.]);
        assert_eq!(
            avg_pool2d(&example(), 2, 2).unwrap().data(),
            &[2.5, 6.5, 10.5, 14.5]
        );
        let g = Tensor::new(&[1, 2, 2], 4.0).unwrap();
        let gx = avg_pool2d_backward(&[1, 4, 4], &g, 2, 2).unwrap();
        assert!(gx.data().iter().all(|&v| v == 1.0));
    }
}
