//! Cutting rasters into fixed-size tiles and reassembling them.

use serde::{Deserialize, Serialize};

use super::{GeoRaster, GeoTransform};
use crate::error::{Error, Result};

/// Layout of a tiled raster. Edge tiles are padded with `nodata`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile_size: usize,
    /// Tiles across.
    pub cols: usize,
    /// Tiles down.
    pub rows: usize,
    /// Source extent in pixels.
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub geotransform: GeoTransform,
    pub crs: String,
    pub nodata: f64,
}

impl TileGrid {
    pub fn for_raster(raster: &GeoRaster, tile_size: usize) -> Result<Self> {
        if tile_size == 0 {
            return Err(Error::param("tile size must be at least 1"));
        }
        Ok(Self {
            tile_size,
            cols: raster.width().div_ceil(tile_size),
            rows: raster.height().div_ceil(tile_size),
            width: raster.width(),
            height: raster.height(),
            channels: raster.channels(),
            geotransform: raster.geotransform,
            crs: raster.crs.clone(),
            nodata: raster.nodata,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Geotransform of tile (`row`, `col`).
    pub fn tile_transform(&self, row: usize, col: usize) -> GeoTransform {
        self.geotransform.offset(col * self.tile_size, row * self.tile_size)
    }

    /// Pixels of tile (`row`, `col`) that lie inside the source extent,
    /// as `(width, height)`.
    pub fn valid_extent(&self, row: usize, col: usize) -> (usize, usize) {
        let w = self.tile_size.min(self.width.saturating_sub(col * self.tile_size));
        let h = self.tile_size.min(self.height.saturating_sub(row * self.tile_size));
        (w, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub raster: GeoRaster,
}

/// Row-major tiles of `tile_size` x `tile_size` pixels.
pub fn tile(raster: &GeoRaster, tile_size: usize) -> Result<(TileGrid, Vec<Tile>)> {
    let grid = TileGrid::for_raster(raster, tile_size)?;
    let mut tiles = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            tiles.push(Tile {
                row,
                col,
                raster: raster.window(col * tile_size, row * tile_size, tile_size, tile_size),
            });
        }
    }
    Ok((grid, tiles))
}

/// Places every tile by its grid coordinates and drops the edge padding.
/// Input order does not matter.
pub fn mosaic(tiles: &[Tile], grid: &TileGrid) -> Result<GeoRaster> {
    let ts = grid.tile_size;
    let mut placed = vec![false; grid.len()];
    let mut out = GeoRaster::filled(
        grid.width,
        grid.height,
        grid.channels,
        grid.geotransform,
        grid.crs.clone(),
        grid.nodata,
    )?;
    for t in tiles {
        if t.row >= grid.rows || t.col >= grid.cols {
            return Err(Error::data(format!("tile (row {}, col {}) lies outside the grid", t.row, t.col)));
        }
        let r = &t.raster;
        if r.width() != ts || r.height() != ts || r.channels() != grid.channels {
            return Err(Error::data(format!(
                "tile (row {}, col {}) is {}x{}x{}, expected {}x{ts}x{ts}",
                t.row,
                t.col,
                r.channels(),
                r.height(),
                r.width(),
                grid.channels
            )));
        }
        let slot = &mut placed[t.row * grid.cols + t.col];
        if *slot {
            return Err(Error::data(format!("tile (row {}, col {}) given twice", t.row, t.col)));
        }
        *slot = true;
        let (w, h) = grid.valid_extent(t.row, t.col);
        for c in 0..grid.channels {
            for y in 0..h {
                let dst = out.index(c, t.row * ts + y, t.col * ts);
                let src = r.index(c, y, 0);
                out.data_mut()[dst..dst + w].copy_from_slice(&r.data()[src..src + w]);
            }
        }
    }
    if let Some(i) = placed.iter().position(|p| !p) {
        return Err(Error::data(format!("missing tile (row {}, col {})", i / grid.cols, i % grid.cols)));
    }
    Ok(out)
}
