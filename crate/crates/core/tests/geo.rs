mod common;

use proptest::prelude::*;
use terraseg::geo::augment::transform;
use terraseg::geo::{
    mosaic, parse_wkt, rasterize, scl_to_ignore_mask, tile, AugmentOp, GeoRaster, GeoTransform,
    DEFAULT_SCL_IGNORE,
};
use terraseg::rng::SeededRng;

use common::oracle::{pnpoly, random_polygon};

#[test]
fn rasterize_matches_point_in_polygon_oracle() {
    let mut rng = SeededRng::new(2024);
    for case in 0..50 {
        let w = 1 + rng.below(64);
        let h = 1 + rng.below(64);
        let px = [1.0, 0.5, 10.0, 1e-4][case % 4];
        let (x0, y0) = (rng.uniform_range(-50.0, 50.0), rng.uniform_range(-50.0, 50.0));
        let gt = GeoTransform([x0, px, 0.0, y0, 0.0, -px]);
        let template = GeoRaster::filled(w, h, 1, gt, "EPSG:4326", 0.0).unwrap();
        let g = random_polygon(&mut rng, case, x0, y0, px, w, h);
        // through the text form, as labels arrive on disk
        let g = parse_wkt(&g.to_string()).unwrap();
        let out = rasterize(&[(g.clone(), 1.0)], &template).unwrap();
        for r in 0..h {
            for c in 0..w {
                let x = x0 + (c as f64 + 0.5) * px;
                let y = y0 + (r as f64 + 0.5) * -px;
                let expected = if pnpoly(&g.rings, x, y) { 1.0 } else { 0.0 };
                assert_eq!(out.get(0, r, c), expected, "case {case} pixel ({r}, {c})");
            }
        }
    }
}

#[test]
fn three_hundred_square_round_trip() {
    let mut rng = SeededRng::new(5);
    let data = (0..300 * 300 * 3).map(|_| rng.uniform_range(-1e3, 1e3)).collect();
    let r = GeoRaster::new(300, 300, 3, data, GeoTransform::north_up(500_000.0, 4_900_000.0, 10.0, 10.0), "EPSG:32634", f64::NAN).unwrap();
    let (grid, tiles) = tile(&r, 256).unwrap();
    assert_eq!((grid.rows, grid.cols), (2, 2));
    let back = mosaic(&tiles, &grid).unwrap();
    assert_eq!(back.data().len(), r.data().len());
    assert!(back.data().iter().zip(r.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn raster_strategy() -> impl Strategy<Value = GeoRaster> {
    (1usize..40, 1usize..40, 1usize..4, any::<u64>()).prop_map(|(w, h, c, seed)| {
        let mut rng = SeededRng::new(seed);
        let data = (0..w * h * c).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        GeoRaster::new(w, h, c, data, GeoTransform::north_up(10.0, 20.0, 0.1, 0.1), "EPSG:4326", -999.0).unwrap()
    })
}

proptest! {
    #[test]
    fn tile_mosaic_is_bit_exact(r in raster_strategy(), ts in 1usize..17, seed in any::<u64>()) {
        let (grid, mut tiles) = tile(&r, ts).unwrap();
        prop_assert_eq!(grid.cols, r.width().div_ceil(ts));
        prop_assert_eq!(grid.rows, r.height().div_ceil(ts));
        SeededRng::new(seed).shuffle(&mut tiles);
        prop_assert_eq!(mosaic(&tiles, &grid).unwrap(), r);
    }

    #[test]
    fn tiles_carry_consistent_georeference(r in raster_strategy(), ts in 1usize..17) {
        let (grid, tiles) = tile(&r, ts).unwrap();
        for t in &tiles {
            let (x, y) = t.raster.geotransform.pixel_to_world(0.0, 0.0);
            let (ex, ey) = r.geotransform.pixel_to_world((t.col * ts) as f64, (t.row * ts) as f64);
            prop_assert_eq!((x, y), (ex, ey));
            prop_assert_eq!(&t.raster.crs, &grid.crs);
        }
    }

    #[test]
    fn augmentations_permute_valid_pixels(r in raster_strategy(), k in 0u8..4, dx in -3isize..4, dy in -3isize..4) {
        let sorted = |x: &GeoRaster| {
            let mut v: Vec<u64> = x.data().iter().filter(|&&v| v != -999.0).map(|v| v.to_bits()).collect();
            v.sort_unstable();
            v
        };
        let before = sorted(&r);
        for op in [AugmentOp::FlipH, AugmentOp::FlipV, AugmentOp::Rot90 { k }] {
            prop_assert_eq!(sorted(&transform(&r, op).unwrap()), before.clone());
        }
        if dx.unsigned_abs() < r.width() && dy.unsigned_abs() < r.height() {
            let s = transform(&r, AugmentOp::Shift { dx, dy }).unwrap();
            let kept = (r.width() - dx.unsigned_abs()) * (r.height() - dy.unsigned_abs()) * r.channels();
            prop_assert_eq!(s.data().iter().filter(|&&v| v != -999.0).count(), kept);
        }
    }

    #[test]
    fn ignore_mask_is_binary(codes in proptest::collection::vec(0u8..12, 16)) {
        let scl = GeoRaster::new(4, 4, 1, codes.iter().map(|&c| f64::from(c)).collect(), GeoTransform::north_up(0.0, 0.0, 20.0, 20.0), "EPSG:32634", 0.0).unwrap();
        let m = scl_to_ignore_mask(&scl, &DEFAULT_SCL_IGNORE).unwrap();
        for (c, v) in codes.iter().zip(m.data()) {
            prop_assert_eq!(*v == 1.0, *c == 0 || DEFAULT_SCL_IGNORE.contains(c));
        }
        let again = scl_to_ignore_mask(&m, &[1]).unwrap();
        prop_assert_eq!(again.data(), m.data());
    }

    #[test]
    fn affine_round_trip(c in -1e4f64..1e4, r in -1e4f64..1e4, rot in -0.5f64..0.5) {
        let gt = GeoTransform([300_000.0, 10.0, rot, 5_000_000.0, -rot, -10.0]);
        let (x, y) = gt.pixel_to_world(c, r);
        let (c2, r2) = gt.world_to_pixel(x, y).unwrap();
        let (x2, y2) = gt.pixel_to_world(c2, r2);
        prop_assert!((x - x2).abs() < 1e-9 * x.abs().max(1.0));
        prop_assert!((y - y2).abs() < 1e-9 * y.abs().max(1.0));
    }
}
