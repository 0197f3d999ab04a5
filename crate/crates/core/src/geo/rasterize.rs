//! Burning polygons into a label grid and cropping rasters to a box.

use super::{GeoRaster, WktGeometry};
use crate::error::{Error, Result};

/// Crossing x of the horizontal line at `y` with edge `a`-`b`, or `None`
/// when the edge does not straddle it. An edge counts when exactly one
/// endpoint lies strictly above `y`, which makes the test half-open.
#[inline]
fn crossing(a: (f64, f64), b: (f64, f64), y: f64) -> Option<f64> {
    let ((xi, yi), (xj, yj)) = (a, b);
    ((yi > y) != (yj > y)).then(|| (xj - xi) * (y - yi) / (yj - yi) + xi)
}

/// Even-odd test over every ring, so holes subtract.
pub fn point_in_polygon(geom: &WktGeometry, x: f64, y: f64) -> bool {
    let mut inside = false;
    for ring in &geom.rings {
        for w in ring.windows(2) {
            if let Some(xc) = crossing(w[0], w[1], y) {
                if x < xc {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn check_crs(geom: &WktGeometry, crs: &str) -> Result<()> {
    match &geom.crs {
        Some(g) if g != crs => Err(Error::data(format!("geometry CRS {g} does not match raster CRS {crs}"))),
        _ => Ok(()),
    }
}

fn burn(out: &mut GeoRaster, geom: &WktGeometry, value: f64) {
    let gt = out.geotransform;
    let (w, h) = (out.width(), out.height());
    if !gt.is_north_up() {
        for r in 0..h {
            for c in 0..w {
                let (x, y) = gt.pixel_center(c, r);
                if point_in_polygon(geom, x, y) {
                    out.set(0, r, c, value);
                }
            }
        }
        return;
    }
    // scanline: one sorted crossing list per row, shared by every column
    let (min_y, max_y) = geom
        .rings
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let mut xs = Vec::new();
    for r in 0..h {
        let (_, y) = gt.pixel_center(0, r);
        if y < min_y || y > max_y {
            continue;
        }
        xs.clear();
        for ring in &geom.rings {
            xs.extend(ring.windows(2).filter_map(|e| crossing(e[0], e[1], y)));
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for c in 0..w {
            let (x, _) = gt.pixel_center(c, r);
            let right = xs.len() - xs.partition_point(|&v| v <= x);
            if right % 2 == 1 {
                out.set(0, r, c, value);
            }
        }
    }
}

/// Single-band raster over `template`'s grid. A pixel takes a polygon's
/// class when its center is inside (even-odd rule); later shapes
/// overwrite earlier ones and untouched pixels keep `template.nodata`.
pub fn rasterize(shapes: &[(WktGeometry, f64)], template: &GeoRaster) -> Result<GeoRaster> {
    for (g, _) in shapes {
        check_crs(g, &template.crs)?;
    }
    let mut out = GeoRaster::filled(
        template.width(),
        template.height(),
        1,
        template.geotransform,
        template.crs.clone(),
        template.nodata,
    )?;
    for (g, v) in shapes {
        burn(&mut out, g, *v);
    }
    Ok(out)
}

/// Pixels of `raster` overlapping the envelope of `bbox`, values copied
/// unchanged and the geotransform moved to the new origin.
pub fn crop_to_bbox(raster: &GeoRaster, bbox: &WktGeometry) -> Result<GeoRaster> {
    check_crs(bbox, &raster.crs)?;
    let (x0, y0, x1, y1) = bbox.envelope();
    let gt = raster.geotransform;
    let mut cols = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rows = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        let (c, r) = gt.world_to_pixel(x, y)?;
        cols = (cols.0.min(c), cols.1.max(c));
        rows = (rows.0.min(r), rows.1.max(r));
    }
    // absorb rounding from the inverse transform at exact pixel edges
    const SNAP: f64 = 1e-9;
    let c0 = (cols.0 + SNAP).floor().max(0.0);
    let c1 = (cols.1 - SNAP).ceil().min(raster.width() as f64);
    let r0 = (rows.0 + SNAP).floor().max(0.0);
    let r1 = (rows.1 - SNAP).ceil().min(raster.height() as f64);
    if !(c0 < c1 && r0 < r1) {
        return Err(Error::Extent(format!(
            "box ({x0}, {y0}, {x1}, {y1}) does not intersect raster bounds {:?}",
            raster.bounds()
        )));
    }
    let (c0, r0) = (c0 as usize, r0 as usize);
    Ok(raster.window(c0, r0, c1 as usize - c0, r1 as usize - r0))
}
