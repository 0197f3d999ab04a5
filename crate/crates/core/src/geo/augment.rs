//! Geometric augmentation applied identically to an image tile and its
//! label tile.
//!
//! Augmented tiles are training samples, not products: the geotransform is
//! carried over unchanged.

use serde::{Deserialize, Serialize};

use super::GeoRaster;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    /// Mirror columns.
    FlipH,
    /// Mirror rows.
    FlipV,
    /// `k` quarter turns counter-clockwise.
    Rot90 { k: u8 },
    /// Move content `dx` columns right and `dy` rows down; vacated pixels
    /// become nodata.
    Shift { dx: isize, dy: isize },
}

impl AugmentOp {
    /// Uniform choice among flips, the three rotations and a shift with
    /// offsets in `-max_shift..=max_shift`.
    pub fn random(rng: &mut SeededRng, max_shift: usize) -> Self {
        match rng.below(6) {
            0 => AugmentOp::FlipH,
            1 => AugmentOp::FlipV,
            k @ 2..=4 => AugmentOp::Rot90 { k: (k - 1) as u8 },
            _ => {
                let span = 2 * max_shift + 1;
                let dx = rng.below(span) as isize - max_shift as isize;
                let dy = rng.below(span) as isize - max_shift as isize;
                AugmentOp::Shift { dx, dy }
            }
        }
    }

    /// Output `(width, height)` for an input of the given size.
    fn output_size(self, w: usize, h: usize) -> (usize, usize) {
        match self {
            AugmentOp::Rot90 { k } if k % 2 == 1 => (h, w),
            _ => (w, h),
        }
    }

    /// Source pixel for output pixel (`r`, `c`), or `None` if vacated.
    fn source(self, r: usize, c: usize, w: usize, h: usize) -> Option<(usize, usize)> {
        match self {
            AugmentOp::FlipH => Some((r, w - 1 - c)),
            AugmentOp::FlipV => Some((h - 1 - r, c)),
            AugmentOp::Rot90 { k } => Some(match k % 4 {
                0 => (r, c),
                1 => (c, w - 1 - r),
                2 => (h - 1 - r, w - 1 - c),
                _ => (h - 1 - c, r),
            }),
            AugmentOp::Shift { dx, dy } => {
                let sr = r as isize - dy;
                let sc = c as isize - dx;
                (sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w).then_some((sr as usize, sc as usize))
            }
        }
    }
}

/// Applies `op` to every band of one raster.
pub fn transform(raster: &GeoRaster, op: AugmentOp) -> Result<GeoRaster> {
    let (w, h) = (raster.width(), raster.height());
    if let AugmentOp::Shift { dx, dy } = op {
        if dx.unsigned_abs() >= w.max(1) || dy.unsigned_abs() >= h.max(1) {
            return Err(Error::param(format!("shift ({dx}, {dy}) is not smaller than the {w}x{h} tile")));
        }
    }
    let (ow, oh) = op.output_size(w, h);
    let mut data = Vec::with_capacity(raster.data().len());
    for ch in 0..raster.channels() {
        for r in 0..oh {
            for c in 0..ow {
                data.push(match op.source(r, c, w, h) {
                    Some((sr, sc)) => raster.get(ch, sr, sc),
                    None => raster.nodata,
                });
            }
        }
    }
    GeoRaster::new(ow, oh, raster.channels(), data, raster.geotransform, raster.crs.clone(), raster.nodata)
}

/// Same transform on image and labels. Shifted-in label pixels take the
/// label nodata value, which downstream code treats as ignored.
pub fn augment(image: &GeoRaster, labels: &GeoRaster, op: AugmentOp) -> Result<(GeoRaster, GeoRaster)> {
    if (image.width(), image.height()) != (labels.width(), labels.height()) {
        return Err(Error::shape(format!(
            "image {}x{} and labels {}x{} differ in extent",
            image.width(),
            image.height(),
            labels.width(),
            labels.height()
        )));
    }
    Ok((transform(image, op)?, transform(labels, op)?))
}

/// Draws the operation from `seed` and applies it.
pub fn augment_seeded(
    image: &GeoRaster,
    labels: &GeoRaster,
    seed: u64,
    max_shift: usize,
) -> Result<(AugmentOp, GeoRaster, GeoRaster)> {
    let side = image.width().min(image.height());
    let op = AugmentOp::random(&mut SeededRng::new(seed), max_shift.min(side.saturating_sub(1)));
    let (a, b) = augment(image, labels, op)?;
    Ok((op, a, b))
}
