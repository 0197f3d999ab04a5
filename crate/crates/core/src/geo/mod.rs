//! Georeferenced rasters and the operations that prepare them for training:
//! WKT parsing, label burning, cropping, tiling, cloud masks and
//! augmentation.

pub mod augment;
pub mod io;
pub mod mask;
pub mod rasterize;
pub mod tile;
pub mod wkt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use augment::{augment, augment_seeded, AugmentOp};
pub use mask::{scl_to_ignore_mask, DEFAULT_SCL_IGNORE};
pub use rasterize::{crop_to_bbox, point_in_polygon, rasterize};
pub use tile::{mosaic, tile, Tile, TileGrid};
pub use wkt::{parse_wkt, WktGeometry};

/// GDAL-ordered affine coefficients:
/// `x = t[0] + col * t[1] + row * t[2]`, `y = t[3] + col * t[4] + row * t[5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeoTransform(pub [f64; 6]);

impl GeoTransform {
    /// North-up transform with square-ish pixels.
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_width: f64, pixel_height: f64) -> Self {
        Self([origin_x, pixel_width, 0.0, origin_y, 0.0, -pixel_height.abs()])
    }

    pub fn determinant(&self) -> f64 {
        let t = &self.0;
        t[1] * t[5] - t[2] * t[4]
    }

    pub fn is_north_up(&self) -> bool {
        self.0[2] == 0.0 && self.0[4] == 0.0
    }

    /// World coordinates of a (fractional) pixel position.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        let t = &self.0;
        (t[0] + col * t[1] + row * t[2], t[3] + col * t[4] + row * t[5])
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        self.pixel_to_world(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Inverse map; fails on a singular transform.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::param(format!("singular geotransform {:?}", self.0)));
        }
        let t = &self.0;
        let (dx, dy) = (x - t[0], y - t[3]);
        Ok(((dx * t[5] - dy * t[2]) / det, (dy * t[1] - dx * t[4]) / det))
    }

    /// Transform of the sub-grid starting at pixel (`col`, `row`).
    pub fn offset(&self, col: usize, row: usize) -> Self {
        let (x, y) = self.pixel_to_world(col as f64, row as f64);
        let t = self.0;
        Self([x, t[1], t[2], y, t[4], t[5]])
    }
}

/// Channel-planar raster (`[channels, height, width]`) with georeference.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRaster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    pub geotransform: GeoTransform,
    pub crs: String,
    pub nodata: f64,
}

impl GeoRaster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        geotransform: GeoTransform,
        crs: impl Into<String>,
        nodata: f64,
    ) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{height}x{width} raster",
                data.len()
            )));
        }
        if geotransform.determinant() == 0.0 || !geotransform.determinant().is_finite() {
            return Err(Error::param(format!("singular geotransform {:?}", geotransform.0)));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            geotransform,
            crs: crs.into(),
            nodata,
        })
    }

    /// Raster filled with `nodata`.
    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        geotransform: GeoTransform,
        crs: impl Into<String>,
        nodata: f64,
    ) -> Result<Self> {
        Self::new(width, height, channels, vec![nodata; width * height * channels], geotransform, crs, nodata)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
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

    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(channel, row, col)]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, v: f64) {
        let i = self.index(channel, row, col);
        self.data[i] = v;
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// NaN nodata matches NaN values.
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || (v.is_nan() && self.nodata.is_nan())
    }

    /// Same georeference and extent, new contents.
    pub fn with_data(&self, channels: usize, data: Vec<f64>, nodata: f64) -> Result<Self> {
        Self::new(self.width, self.height, channels, data, self.geotransform, self.crs.clone(), nodata)
    }

    /// World bounding box `(min_x, min_y, max_x, max_y)` of the pixel extent.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let corners = [
            self.geotransform.pixel_to_world(0.0, 0.0),
            self.geotransform.pixel_to_world(self.width as f64, 0.0),
            self.geotransform.pixel_to_world(0.0, self.height as f64),
            self.geotransform.pixel_to_world(self.width as f64, self.height as f64),
        ];
        corners.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    /// Copy of the window at (`col`, `row`) of size `w` x `h`; positions
    /// past the edge read as `nodata`.
    pub fn window(&self, col: usize, row: usize, w: usize, h: usize) -> Self {
        let mut data = vec![self.nodata; self.channels * w * h];
        for c in 0..self.channels {
            for r in 0..h.min(self.height.saturating_sub(row)) {
                let src = self.index(c, row + r, col);
                let n = w.min(self.width.saturating_sub(col));
                let dst = (c * h + r) * w;
                data[dst..dst + n].copy_from_slice(&self.data[src..src + n]);
            }
        }
        Self {
            width: w,
            height: h,
            channels: self.channels,
            data,
            geotransform: self.geotransform.offset(col, row),
            crs: self.crs.clone(),
            nodata: self.nodata,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.channels, self.height, self.width], self.data.clone()).expect("consistent extent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_round_trip() {
        let t = GeoTransform([500_000.0, 10.0, 0.3, 4_800_000.0, -0.2, -10.0]);
        for (c, r) in [(0.0, 0.0), (12.5, 7.25), (255.0, 1000.0)] {
            let (x, y) = t.pixel_to_world(c, r);
            let (c2, r2) = t.world_to_pixel(x, y).unwrap();
            let (x2, y2) = t.pixel_to_world(c2, r2);
            assert!((x - x2).abs() < 1e-9 && (y - y2).abs() < 1e-9);
            assert!((c - c2).abs() < 1e-9 && (r - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_transform_rejected() {
        let t = GeoTransform([0.0, 1.0, 2.0, 0.0, 0.5, 1.0]);
        assert!(t.world_to_pixel(0.0, 0.0).is_err());
        assert!(GeoRaster::filled(2, 2, 1, t, "EPSG:4326", 0.0).is_err());
    }

    #[test]
    fn window_pads_with_nodata() {
        let t = GeoTransform::north_up(0.0, 3.0, 1.0, 1.0);
        let r = GeoRaster::new(3, 3, 1, (0..9).map(f64::from).collect(), t, "EPSG:4326", -1.0).unwrap();
        let w = r.window(2, 1, 2, 2);
        assert_eq!(w.data(), &[5.0, -1.0, 8.0, -1.0]);
        assert_eq!(w.geotransform.0[0], 2.0);
        assert_eq!(w.geotransform.0[3], 2.0);
    }

    #[test]
    fn nan_nodata() {
        let t = GeoTransform::north_up(0.0, 0.0, 1.0, 1.0);
        let r = GeoRaster::filled(1, 1, 1, t, "EPSG:4326", f64::NAN).unwrap();
        assert!(r.is_nodata(r.data()[0]));
    }
}
