//! Dense row-major `f64` tensors.
//!
//! Image tensors are laid out as `[channels, height, width]`, optionally
//! with a leading batch extent (`[batch, channels, height, width]`). The
//! spatial helpers ([`Tensor::crop_center`], [`Tensor::pad_zero`],
//! [`Tensor::concat_channels`]) accept either rank.

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    name: Option<String>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("Tensor");
        d.field("shape", &self.shape);
        if let Some(name) = &self.name {
            d.field("name", name);
        }
        if self.data.len() <= 16 {
            d.field("data", &self.data);
        }
        d.finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("tensor needs at least one extent"));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::shape(format!(
            "extent {pos} of {shape:?} is zero; all extents must be >= 1"
        )));
    }
    Ok(shape.iter().product())
}

/// Spatial view of an image tensor: `(batch, channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Tensor {
    /// Tensor of `shape` with every element equal to `fill`.
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; len],
            name: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            name: None,
        })
    }

    /// Constructor for shapes already known to be valid.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert!(!shape.is_empty() && shape.iter().all(|&e| e > 0));
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data,
            name: None,
        }
    }

    pub(crate) fn filled(shape: Vec<usize>, fill: f64) -> Self {
        let len = shape.iter().product();
        Self::raw(shape, vec![fill; len])
    }

    /// Elements drawn uniformly from `[low, high)`.
    pub fn random(shape: &[usize], rng: &mut SeededRng, low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::Range(format!(
                "random fill needs low < high, got [{low}, {high})"
            )));
        }
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| rng.uniform_range(low, high)).collect();
        Ok(Self::raw(shape.to_vec(), data))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
            name: self.name.clone(),
        })
    }

    pub fn flatten(&self) -> Self {
        Self {
            shape: vec![self.data.len()],
            data: self.data.clone(),
            name: self.name.clone(),
        }
    }

    /// Batch/channel/spatial interpretation of a rank-3 or rank-4 tensor.
    pub fn dims4(&self) -> Result<Dims4> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok(Dims4 { n: 1, c, h, w }),
            [n, c, h, w] => Ok(Dims4 { n, c, h, w }),
            _ => Err(Error::shape(format!(
                "expected [C,H,W] or [N,C,H,W], got {:?}",
                self.shape
            ))),
        }
    }

    fn with_spatial(&self, c: usize, h: usize, w: usize) -> Vec<usize> {
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape[r - 3] = c;
        shape[r - 2] = h;
        shape[r - 1] = w;
        shape
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::raw(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "element-wise op on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self::raw(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Centered spatial window of `target_h x target_w`.
    ///
    /// The offset along each axis is `floor((src - dst) / 2)`.
    pub fn crop_center(&self, target_h: usize, target_w: usize) -> Result<Self> {
        let d = self.dims4()?;
        if target_h == 0 || target_w == 0 || target_h > d.h || target_w > d.w {
            return Err(Error::shape(format!(
                "cannot crop {}x{} to {target_h}x{target_w}",
                d.h, d.w
            )));
        }
        let oy = (d.h - target_h) / 2;
        let ox = (d.w - target_w) / 2;
        let mut data = Vec::with_capacity(d.n * d.c * target_h * target_w);
        for plane in self.data.chunks_exact(d.plane()) {
            for y in 0..target_h {
                let row = (oy + y) * d.w + ox;
                data.extend_from_slice(&plane[row..row + target_w]);
            }
        }
        Ok(Self::raw(self.with_spatial(d.c, target_h, target_w), data))
    }

    /// Adjoint of [`Tensor::crop_center`]: places `self` at the same
    /// centered offset inside a zero tensor of `h x w`.
    pub fn embed_center(&self, h: usize, w: usize) -> Result<Self> {
        let d = self.dims4()?;
        if d.h > h || d.w > w {
            return Err(Error::shape(format!(
                "cannot embed {}x{} into {h}x{w}",
                d.h, d.w
            )));
        }
        let oy = (h - d.h) / 2;
        let ox = (w - d.w) / 2;
        let mut data = vec![0.0; d.n * d.c * h * w];
        for (src, dst) in self.data.chunks_exact(d.plane()).zip(data.chunks_exact_mut(h * w)) {
            for y in 0..d.h {
                let o = (oy + y) * w + ox;
                dst[o..o + d.w].copy_from_slice(&src[y * d.w..(y + 1) * d.w]);
            }
        }
        Ok(Self::raw(self.with_spatial(d.c, h, w), data))
    }

    /// Stacks `b`'s channels after `a`'s.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Self> {
        let da = a.dims4()?;
        let db = b.dims4()?;
        if a.rank() != b.rank() || da.n != db.n || da.h != db.h || da.w != db.w {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} with {:?}",
                a.shape, b.shape
            )));
        }
        let sa = da.c * da.plane();
        let sb = db.c * db.plane();
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..da.n {
            data.extend_from_slice(&a.data[i * sa..(i + 1) * sa]);
            data.extend_from_slice(&b.data[i * sb..(i + 1) * sb]);
        }
        Ok(Self::raw(a.with_spatial(da.c + db.c, da.h, da.w), data))
    }

    /// Channels `range` of every batch item.
    pub fn slice_channels(&self, range: Range<usize>) -> Result<Self> {
        let d = self.dims4()?;
        if range.start >= range.end || range.end > d.c {
            return Err(Error::shape(format!(
                "channel range {range:?} outside 0..{}",
                d.c
            )));
        }
        let p = d.plane();
        let mut data = Vec::with_capacity(d.n * range.len() * p);
        for i in 0..d.n {
            let base = i * d.c * p;
            data.extend_from_slice(&self.data[base + range.start * p..base + range.end * p]);
        }
        Ok(Self::raw(self.with_spatial(range.len(), d.h, d.w), data))
    }

    /// Adds a zero border of `pad_h` rows and `pad_w` columns on each side.
    pub fn pad_zero(&self, pad_h: usize, pad_w: usize) -> Result<Self> {
        let d = self.dims4()?;
        let (h, w) = (d.h + 2 * pad_h, d.w + 2 * pad_w);
        let mut data = vec![0.0; d.n * d.c * h * w];
        for (src, dst) in self
            .data
            .chunks_exact(d.plane())
            .zip(data.chunks_exact_mut(h * w))
        {
            for y in 0..d.h {
                let o = (y + pad_h) * w + pad_w;
                dst[o..o + d.w].copy_from_slice(&src[y * d.w..(y + 1) * d.w]);
            }
        }
        Ok(Self::raw(self.with_spatial(d.c, h, w), data))
    }

    /// Nearest-neighbour resize of the spatial axes.
    pub fn resize_nearest(&self, h: usize, w: usize) -> Result<Self> {
        let d = self.dims4()?;
        if h == 0 || w == 0 {
            return Err(Error::shape("resize target must be non-empty"));
        }
        let mut data = Vec::with_capacity(d.n * d.c * h * w);
        for plane in self.data.chunks_exact(d.plane()) {
            for y in 0..h {
                let sy = y * d.h / h;
                for x in 0..w {
                    data.push(plane[sy * d.w + x * d.w / w]);
                }
            }
        }
        Ok(Self::raw(self.with_spatial(d.c, h, w), data))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(format!(
                    "cannot stack {:?} with {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Self::raw(shape, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iota(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn new_fills_and_rejects_zero_extent() {
        let t = Tensor::new(&[2, 2], 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        assert!(matches!(Tensor::new(&[2, 0], 0.0), Err(Error::Shape(_))));
        assert!(Tensor::new(&[], 0.0).is_err());
    }

    #[test]
    fn tile_shaped_tensors() {
        let s2 = Tensor::new(&[4, 256, 256], 0.0).unwrap();
        assert_eq!(s2.len(), 4 * 256 * 256);
        let s3 = Tensor::new(&[21, 9, 9], 1.0).unwrap();
        assert_eq!(s3.dims4().unwrap(), Dims4 { n: 1, c: 21, h: 9, w: 9 });
        assert_eq!(s3.sum(), (21 * 81) as f64);
    }

    #[test]
    fn random_is_seeded_and_in_range() {
        let a = Tensor::random(&[3, 4], &mut SeededRng::new(42), 0.0, 1.0).unwrap();
        let b = Tensor::random(&[3, 4], &mut SeededRng::new(42), 0.0, 1.0).unwrap();
        let c = Tensor::random(&[3, 4], &mut SeededRng::new(43), 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let one = Tensor::random(&[1], &mut SeededRng::new(0), 0.0, 1.0).unwrap();
        assert!((0.0..1.0).contains(&one.data()[0]));
        assert!(matches!(
            Tensor::random(&[1], &mut SeededRng::new(0), 1.0, 1.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn crop_center_offsets() {
        let t = iota(&[1, 6, 6]);
        let c = t.crop_center(4, 4).unwrap();
        assert_eq!(c.shape(), &[1, 4, 4]);
        assert_eq!(c.data()[0], 7.0); // (1,1)

        let t = iota(&[3, 5, 5]);
        let c = t.crop_center(4, 4).unwrap();
        // floor((5-4)/2) = 0
        assert_eq!(c.data()[0], 0.0);
        assert_eq!(c.data()[16], 25.0);

        let t = iota(&[1, 4, 4]);
        assert_eq!(t.crop_center(4, 4).unwrap(), t);
        assert!(t.crop_center(5, 4).is_err());
    }

    #[test]
    fn embed_is_crop_adjoint() {
        let mut rng = SeededRng::new(3);
        let x = Tensor::random(&[2, 7, 6], &mut rng, -1.0, 1.0).unwrap();
        let y = Tensor::random(&[2, 4, 3], &mut rng, -1.0, 1.0).unwrap();
        let lhs = x.crop_center(4, 3).unwrap().dot(&y);
        let rhs = x.dot(&y.embed_center(7, 6).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn concat_then_slice_recovers() {
        let a = iota(&[2, 4, 4]);
        let b = Tensor::new(&[3, 4, 4], -1.0).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[5, 4, 4]);
        assert_eq!(c.slice_channels(0..2).unwrap(), a);
        assert_eq!(c.slice_channels(2..5).unwrap(), b);
        let bad = Tensor::new(&[1, 3, 4], 0.0).unwrap();
        assert!(Tensor::concat_channels(&a, &bad).is_err());
    }

    #[test]
    fn concat_batched() {
        let a = iota(&[2, 1, 2, 2]);
        let b = Tensor::new(&[2, 1, 2, 2], 9.0).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2, 2]);
        assert_eq!(&c.data()[0..8], &[0.0, 1.0, 2.0, 3.0, 9.0, 9.0, 9.0, 9.0]);
        assert_eq!(&c.data()[8..12], &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn pad_zero_border() {
        let t = Tensor::new(&[1, 2, 2], 1.0).unwrap();
        assert_eq!(t.pad_zero(0, 0).unwrap(), t);
        let p = t.pad_zero(1, 1).unwrap();
        assert_eq!(p.shape(), &[1, 4, 4]);
        assert_eq!(p.data().iter().filter(|&&v| v == 0.0).count(), 12);
        assert_eq!(p.sum(), t.sum());
    }

    #[test]
    fn resize_nearest_upsamples() {
        let t = iota(&[1, 2, 2]);
        let r = t.resize_nearest(4, 4).unwrap();
        assert_eq!(
            r.data(),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 2.0, 2.0, 3.0, 3.0]
        );
    }
}
