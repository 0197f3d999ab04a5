//! Deterministic synthetic scenes for tests, examples and demos.
//!
//! Each class has a fixed per-channel signature; pixels take their class
//! signature plus uniform noise, so a small network can separate them.

use std::path::{Path, PathBuf};

use crate::dtype::DType;
use crate::error::Result;
use crate::geo::io::{write_labels, write_raster, LabelFeature, LabelSet};
use crate::geo::{rasterize, GeoRaster, GeoTransform, WktGeometry};
use crate::nn::one_hot;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::train::Sample;

/// Class map of `h` x `w` pixels: background class 0 with one disc or
/// rectangle per remaining class, later shapes drawn on top.
pub fn label_map(h: usize, w: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = SeededRng::derive(seed, 1);
    let mut labels = vec![0usize; h * w];
    for k in 1..classes {
        let cy = rng.uniform_range(0.2, 0.8) * h as f64;
        let cx = rng.uniform_range(0.2, 0.8) * w as f64;
        let ry = rng.uniform_range(0.15, 0.3) * h as f64;
        let rx = rng.uniform_range(0.15, 0.3) * w as f64;
        let disc = k % 2 == 1;
        for r in 0..h {
            for c in 0..w {
                let dy = (r as f64 + 0.5 - cy) / ry;
                let dx = (c as f64 + 0.5 - cx) / rx;
                let inside = if disc { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if inside {
                    labels[r * w + c] = k;
                }
            }
        }
    }
    labels
}

/// Per-class mean value of each channel, in `[0, 1]`.
pub fn signatures(classes: usize, channels: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::derive(seed, 2);
    (0..classes)
        .map(|k| {
            (0..channels)
                .map(|c| {
                    // one dominant channel per class keeps classes apart
                    let base = if c == k % channels { 0.8 } else { 0.2 };
                    base + rng.uniform_range(-0.1, 0.1)
                })
                .collect()
        })
        .collect()
}

/// `[channels, h, w]` image whose pixels follow their class signature.
pub fn image_from_labels(labels: &[usize], h: usize, w: usize, signatures: &[Vec<f64>], noise: f64, seed: u64) -> Result<Tensor> {
    let channels = signatures.first().map_or(0, Vec::len);
    let mut rng = SeededRng::derive(seed, 3);
    let mut data = vec![0.0; channels * h * w];
    for (p, &k) in labels.iter().enumerate() {
        for c in 0..channels {
            let jitter = if noise > 0.0 { rng.uniform_range(-noise, noise) } else { 0.0 };
            data[c * h * w + p] = signatures[k][c] + jitter;
        }
    }
    Tensor::from_vec(&[channels, h, w], data)
}

/// A single `channels` x `size` x `size` training tile with `classes`
/// classes and no ignored pixels.
pub fn tile_sample(size: usize, channels: usize, classes: usize, seed: u64) -> Result<Sample> {
    let labels = label_map(size, size, classes, seed);
    let sig = signatures(classes, channels, seed);
    let input = image_from_labels(&labels, size, size, &sig, 0.05, seed)?;
    let target = one_hot(&labels, 1, size, size, classes)?.reshape(&[classes, size, size])?;
    Ok(Sample {
        input,
        target,
        ignore: None,
    })
}

/// A georeferenced scene on disk: u16 reflectance-like image (x 1e4,
/// nodata 0), a scene classification layer and label polygons.
#[derive(Debug, Clone)]
pub struct DemoScene {
    pub image: GeoRaster,
    pub scl: GeoRaster,
    pub labels: LabelSet,
}

pub const DEMO_CRS: &str = "EPSG:32635";
pub const DEMO_PIXEL: f64 = 10.0;

/// Polygon roughly shaped like an ellipse, in world coordinates.
fn blob(rng: &mut SeededRng, gt: GeoTransform, width: usize, height: usize) -> WktGeometry {
    let cx = rng.uniform_range(0.2, 0.8) * width as f64;
    let cy = rng.uniform_range(0.2, 0.8) * height as f64;
    let rx = rng.uniform_range(0.12, 0.3) * width as f64;
    let ry = rng.uniform_range(0.12, 0.3) * height as f64;
    let mut ring: Vec<(f64, f64)> = (0..12)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / 12.0;
            gt.pixel_to_world(cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    WktGeometry::polygon(vec![ring]).expect("closed ring of 13 points")
}

/// Scene of `width` x `height` pixels with `polygons` labelled blobs over
/// a background polygon of class 0 (omitted when `polygons` is 0). With
/// `clouds`, the SCL marks a cloudy block (code 9) in the top-left corner;
/// elsewhere it is vegetation (code 4).
pub fn demo_scene(width: usize, height: usize, channels: usize, classes: usize, polygons: usize, clouds: bool, seed: u64) -> Result<DemoScene> {
    let gt = GeoTransform::north_up(500_000.0, 5_000_000.0, DEMO_PIXEL, DEMO_PIXEL);
    let mut rng = SeededRng::derive(seed, 4);
    let mut features = Vec::new();
    if polygons > 0 {
        let (x1, y1) = gt.pixel_to_world(width as f64, height as f64);
        features.push(LabelFeature { class: 0, wkt: WktGeometry::rectangle(500_000.0, y1, x1, 5_000_000.0).to_string() });
    }
    for i in 0..polygons {
        let class = 1 + (i % (classes - 1)) as u16;
        features.push(LabelFeature { class, wkt: blob(&mut rng, gt, width, height).to_string() });
    }
    let labels = LabelSet { crs: DEMO_CRS.into(), features };
    let template = GeoRaster::filled(width, height, 1, gt, DEMO_CRS, 0.0)?;
    let burned = rasterize(&labels.geometries()?, &template)?;
    let classes_px: Vec<usize> = burned.data().iter().map(|&v| v as usize).collect();
    let sig = signatures(classes, channels, seed);
    let img = image_from_labels(&classes_px, height, width, &sig, 0.05, seed)?;
    let data = img.data().iter().map(|v| (v * 1e4).round().clamp(1.0, 65535.0)).collect();
    let image = GeoRaster::new(width, height, channels, data, gt, DEMO_CRS, 0.0)?;
    let mut scl = GeoRaster::filled(width, height, 1, gt, DEMO_CRS, 0.0)?;
    for r in 0..height {
        for c in 0..width {
            let cloudy = clouds && r < height / 4 && c < width / 4;
            scl.set(0, r, c, if cloudy { 9.0 } else { 4.0 });
        }
    }
    Ok(DemoScene { image, scl, labels })
}

/// Paths written by [`write_demo_scene`].
#[derive(Debug, Clone)]
pub struct DemoPaths {
    pub image: PathBuf,
    pub scl: PathBuf,
    pub labels: PathBuf,
}

/// Writes `<stem>.bin`, `<stem>_scl.bin` (each with a sidecar) and
/// `<stem>_labels.json` into `dir`.
pub fn write_demo_scene(dir: &Path, stem: &str, scene: &DemoScene) -> Result<DemoPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = DemoPaths {
        image: dir.join(format!("{stem}.bin")),
        scl: dir.join(format!("{stem}_scl.bin")),
        labels: dir.join(format!("{stem}_labels.json")),
    };
    write_raster(&paths.image, &scene.image, DType::U16)?;
    write_raster(&paths.scl, &scene.scl, DType::U8)?;
    write_labels(&paths.labels, &scene.labels)?;
    Ok(paths)
}
