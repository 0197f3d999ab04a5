//! Burns label polygons into a raster, tiles it, and stitches it back.

use terraseg::geo::{mosaic, parse_wkt, rasterize, tile, GeoRaster, GeoTransform};

fn main() -> terraseg::Result<()> {
    let gt = GeoTransform::north_up(500_000.0, 5_000_100.0, 10.0, 10.0);
    let template = GeoRaster::filled(20, 10, 1, gt, "EPSG:32635", 255.0)?;
    let shapes = [
        ("POLYGON((500000 5000000, 500200 5000000, 500200 5000100, 500000 5000100, 500000 5000000))", 0.0),
        ("POLYGON((500020 5000020, 500090 5000020, 500090 5000080, 500020 5000080, 500020 5000020), \
          (500040 5000040, 500070 5000040, 500070 5000060, 500040 5000060, 500040 5000040))", 1.0),
        ("SRID=32635;POLYGON((500110 5000010, 500190 5000050, 500110 5000090, 500110 5000010))", 2.0),
    ];
    let geoms = shapes.iter().map(|(w, v)| Ok((parse_wkt(w)?, *v))).collect::<terraseg::Result<Vec<_>>>()?;
    let labels = rasterize(&geoms, &template)?;
    for r in 0..labels.height() {
        let row: String = (0..labels.width()).map(|c| char::from(b'0' + labels.get(0, r, c) as u8)).collect();
        println!("{row}");
    }

    let (grid, tiles) = tile(&labels, 8)?;
    println!("{} tiles in a {}x{} grid", tiles.len(), grid.rows, grid.cols);
    for t in &tiles {
        println!("tile ({}, {}) origin {:?}", t.row, t.col, t.raster.geotransform.pixel_to_world(0.0, 0.0));
    }
    let back = mosaic(&tiles, &grid)?;
    println!("mosaic identical: {}", back.data() == labels.data());
    Ok(())
}
