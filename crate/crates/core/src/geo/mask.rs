//! Ignore masks from a scene classification layer.

use super::GeoRaster;
use crate::error::{Error, Result};

/// Cloud shadow, cloud medium probability and cloud high probability.
pub const DEFAULT_SCL_IGNORE: [u8; 3] = [3, 8, 9];

/// Nodata value of the returned mask; it never occurs in the mask itself.
pub const MASK_NODATA: f64 = 255.0;

/// `1.0` where the class code is in `ignore` or the pixel is nodata,
/// `0.0` elsewhere. Non-integral values count as unknown codes.
pub fn scl_to_ignore_mask(scl: &GeoRaster, ignore: &[u8]) -> Result<GeoRaster> {
    if scl.channels() != 1 {
        return Err(Error::shape(format!("SCL raster must have one band, got {}", scl.channels())));
    }
    let data = scl
        .data()
        .iter()
        .map(|&v| {
            let hit = scl.is_nodata(v) || ignore.iter().any(|&code| f64::from(code) == v);
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    scl.with_data(1, data, MASK_NODATA)
}
