//! Independent oracles shared by the integration tests.

use terraseg::geo::WktGeometry;
use terraseg::rng::SeededRng;

/// Classic crossing-number test, written out independently of the library.
pub fn pnpoly(rings: &[Vec<(f64, f64)>], x: f64, y: f64) -> bool {
    let mut c = false;
    for ring in rings {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = ring[i];
            let (xj, yj) = ring[j];
            if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
                c = !c;
            }
            j = i;
        }
    }
    c
}

/// Random polygon in world coordinates over the grid extent. Odd cases use
/// arbitrary (possibly self-intersecting) vertex orders; some snap vertices
/// to half-pixel positions so centers land exactly on edges.
pub fn random_polygon(rng: &mut SeededRng, case: usize, x0: f64, y0: f64, px: f64, w: usize, h: usize) -> WktGeometry {
    let n = 3 + rng.below(7);
    let snap = case.is_multiple_of(3);
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let mut c = rng.uniform_range(-2.0, w as f64 + 2.0);
            let mut r = rng.uniform_range(-2.0, h as f64 + 2.0);
            if snap {
                c = (c * 2.0).round() / 2.0;
                r = (r * 2.0).round() / 2.0;
            }
            (x0 + c * px, y0 - r * px)
        })
        .collect();
    if case.is_multiple_of(2) {
        let (cx, cy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n as f64, b + p.1 / n as f64));
        pts.sort_by(|a, b| (a.1 - cy).atan2(a.0 - cx).total_cmp(&(b.1 - cy).atan2(b.0 - cx)));
    }
    pts.push(pts[0]);
    let mut rings = vec![pts];
    if case % 5 == 1 {
        // a hole that may poke outside the shell
        let (cx, cy) = (x0 + w as f64 * px / 2.0, y0 - h as f64 * px / 2.0);
        let s = px * (1.0 + rng.below(w.max(2) / 2) as f64);
        rings.push(vec![(cx - s, cy - s), (cx + s, cy - s), (cx + s, cy + s), (cx - s, cy + s), (cx - s, cy - s)]);
    }
    WktGeometry::polygon(rings).unwrap()
}

